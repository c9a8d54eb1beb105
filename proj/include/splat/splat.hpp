#pragma once

// Umbrella header: pulls in the whole library.

#include "splat/assets.hpp"
#include "splat/camera.hpp"
#include "splat/errors.hpp"
#include "splat/gaussian.hpp"
#include "splat/image.hpp"
#include "splat/meshing.hpp"
#include "splat/metrics.hpp"
#include "splat/pipeline.hpp"
#include "splat/rasterizer.hpp"
#include "splat/texture.hpp"
#include "splat/trainer.hpp"
