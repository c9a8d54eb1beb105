#pragma once

// End-to-end orchestration: synthetic scene bundles, photometric fitting at
// an assumed elevation, mesh extraction with texture baking, standalone
// rendering, and the elevation-sweep harness that quantifies how a wrong
// assumed elevation degrades reconstruction.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splat/assets.hpp"
#include "splat/camera.hpp"
#include "splat/errors.hpp"
#include "splat/gaussian.hpp"
#include "splat/image.hpp"
#include "splat/meshing.hpp"
#include "splat/metrics.hpp"
#include "splat/rasterizer.hpp"
#include "splat/texture.hpp"
#include "splat/trainer.hpp"

namespace splat {

namespace detail {

// FNV-1a over the canonical config text: a stable fingerprint for reports.
// Paths and the worker count are execution details, not part of the
// experiment, so they are pinned before hashing: the same study reproduced
// elsewhere (or at a different parallelism) keeps the same fingerprint.
inline std::string config_hash(RunConfig config) {
    config.input.clear();
    config.output_dir.clear();
    config.workers = 0;
    const std::string text = serialize_config(config);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Snaps values to the 8-bit grid the PNG files use, so in-memory bundles and
// reloaded bundles supervise training identically.
inline Image quantize_8bit(const Image& image) {
    Image out = image;
    for (double& v : out.data) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    return out;
}

inline Image compose_rgba(const Image& rgb, const Image& alpha) {
    Image out(rgb.width, rgb.height, 4);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb.at(x, y, c);
            out.at(x, y, 3) = alpha.at(x, y, 0);
        }
    return out;
}

inline Image rgba_rgb(const Image& rgba) {
    Image out(rgba.width, rgba.height, 3);
    for (int y = 0; y < rgba.height; ++y)
        for (int x = 0; x < rgba.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgba.at(x, y, c);
    return out;
}

inline Image rgba_alpha(const Image& rgba) {
    Image out(rgba.width, rgba.height, 1);
    for (int y = 0; y < rgba.height; ++y)
        for (int x = 0; x < rgba.width; ++x) out.at(x, y, 0) = rgba.at(x, y, 3);
    return out;
}

// Horizontal/vertical concatenation for comparison strips.
inline Image hconcat(const std::vector<Image>& parts) {
    int width = 0;
    for (const Image& p : parts) width += p.width;
    Image out(width, parts.front().height, parts.front().channels);
    int x0 = 0;
    for (const Image& p : parts) {
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                for (int c = 0; c < p.channels; ++c) out.at(x0 + x, y, c) = p.at(x, y, c);
        x0 += p.width;
    }
    return out;
}

inline Image vconcat(const std::vector<Image>& parts) {
    int height = 0;
    for (const Image& p : parts) height += p.height;
    Image out(parts.front().width, height, parts.front().channels);
    int y0 = 0;
    for (const Image& p : parts) {
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                for (int c = 0; c < p.channels; ++c) out.at(x, y0 + y, c) = p.at(x, y, c);
        y0 += p.height;
    }
    return out;
}

inline std::string view_name(const char* prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d.png", prefix, index);
    return buf;
}

inline std::string angle_label(double angle) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", angle);
    return buf;
}

}  // namespace detail

inline CameraIntrinsics make_intrinsics(const RunConfig& config) {
    CameraIntrinsics intr;
    intr.fov_y_deg = config.fov_y;
    intr.width = config.image_size;
    intr.height = config.image_size;
    return intr;
}

inline RenderSettings make_render_settings(const RunConfig& config) {
    RenderSettings s;
    s.workers = config.workers;
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

// Ground-truth scene: a known cloud plus rendered supervision. Training and
// held-out images are 8-bit quantized exactly like the PNGs on disk, so a
// freshly synthesized bundle and a reloaded one behave identically.
struct SceneBundle {
    RunConfig config;                   // snapshot taken at synthesis time
    GaussianCloud ground_truth;
    std::vector<Camera> train_cameras;  // ring at the scene's true elevation
    std::vector<Image> train_images;    // RGBA
    std::vector<Camera> holdout_cameras;
    std::vector<Image> holdout_images;  // RGBA
    TriangleMesh gt_mesh;               // surface extracted from ground truth
};

namespace detail {

inline SplatParams make_blob(const Vec3& position, const Vec3& scale, const Vec3& color,
                             double top_tint) {
    SplatParams p;
    p.position = position;
    p.log_scale = scale.array().log();
    p.opacity_logit = logit(0.98);
    p.sh_coeffs.assign(12, 0.0);  // degree 1
    for (int ch = 0; ch < 3; ++ch) p.sh(0, ch) = color[ch] / detail::kSh0;
    // A band-1 z lobe brightens the view from above and darkens it from
    // below, giving appearance (not just silhouette) an elevation cue.
    for (int ch = 0; ch < 3; ++ch) p.sh(2, ch) = top_tint * color[ch];
    return p;
}

}  // namespace splat::detail helper (constants below)

// Built-in ground-truth scenes. "blob" is an asymmetric multi-lobe shape
// (body, head, snout, ear, legs, tail) with no mirror symmetry in elevation;
// "sphere" is a single isotropic gaussian whose level sets are analytic
// spheres, used by the mesh-fidelity oracles.
inline GaussianCloud preset_cloud(const std::string& preset) {
    GaussianCloud cloud;
    cloud.sh_degree = 1;
    if (preset == "sphere") {
        SplatParams p;
        p.position = Vec3(0, 0, 0);
        p.log_scale = Vec3::Constant(std::log(0.25));
        p.opacity_logit = logit(0.9975);
        p.sh_coeffs.assign(12, 0.0);
        const Vec3 color(0.80, 0.30, 0.25);
        for (int ch = 0; ch < 3; ++ch) p.sh(0, ch) = color[ch] / detail::kSh0;
        for (int ch = 0; ch < 3; ++ch) p.sh(2, ch) = 0.10 * color[ch];
        cloud.splats.push_back(p);
        return cloud;
    }
    if (preset == "blob") {
        using detail::make_blob;
        cloud.splats = {
            make_blob({0.00, 0.00, 0.00}, {0.22, 0.16, 0.14}, {0.65, 0.45, 0.25}, 0.12),
            make_blob({0.28, 0.05, 0.16}, {0.10, 0.10, 0.10}, {0.75, 0.55, 0.35}, 0.15),
            make_blob({0.40, 0.09, 0.13}, {0.05, 0.05, 0.05}, {0.30, 0.20, 0.15}, 0.10),
            make_blob({0.26, -0.05, 0.27}, {0.04, 0.04, 0.06}, {0.60, 0.30, 0.30}, 0.18),
            make_blob({0.14, 0.10, -0.17}, {0.05, 0.05, 0.12}, {0.50, 0.35, 0.20}, 0.08),
            make_blob({-0.14, -0.10, -0.17}, {0.05, 0.05, 0.12}, {0.45, 0.30, 0.18}, 0.08),
            make_blob({-0.30, -0.02, 0.06}, {0.11, 0.045, 0.045}, {0.70, 0.50, 0.30}, 0.12),
        };
        return cloud;
    }
    throw InvalidArgument("unknown scene preset '" + preset +
                          "'; available presets: blob, sphere");
}

namespace detail {

// Held-out poses: a phase-shifted ring at the true elevation plus, when
// there are enough views, a second ring slightly above it, so the held-out
// set differs from training in both azimuth and elevation.
inline std::vector<Camera> holdout_view_set(const RunConfig& config) {
    const CameraIntrinsics intr = make_intrinsics(config);
    const int m = config.holdout_views;
    std::vector<Camera> views;
    if (m < 4) {
        views = sweep_view_set(config.true_elevation, m, config.radius, config.seed + 1, intr);
        return views;
    }
    const int first = (m + 1) / 2;
    views = sweep_view_set(config.true_elevation, first, config.radius, config.seed + 1, intr);
    const double upper = std::min(config.true_elevation + 12.0, 90.0);
    std::vector<Camera> ring2 =
        sweep_view_set(upper, m - first, config.radius, config.seed + 2, intr);
    views.insert(views.end(), ring2.begin(), ring2.end());
    return views;
}

// Extraction used for ground truth and metrics: geometry only, no UVs.
inline TriangleMesh extract_surface(const GaussianCloud& cloud, const RunConfig& config) {
    const auto [lo, hi] = default_grid_bounds(cloud);
    const DensityGrid grid = blocked_density_grid(cloud, lo, hi, 16, 8, config.workers);
    return mesh_cleanup(marching_cubes(grid, config.mesh_threshold, config.workers), 0.1);
}

}  // namespace detail

// Builds the ground-truth bundle in memory and writes it under
// output_dir: config snapshot, splat archive, and RGBA PNGs for the training
// and held-out views. Deterministic for a given config.
inline SceneBundle cmd_synth(const RunConfig& config) {
    validate_config(config);
    SceneBundle bundle;
    bundle.config = config;
    bundle.ground_truth = preset_cloud(config.preset);

    const CameraIntrinsics intr = make_intrinsics(config);
    const RenderSettings settings = make_render_settings(config);
    const Vec3 background = Vec3::Constant(config.background);
    bundle.train_cameras =
        sweep_view_set(config.true_elevation, config.train_views, config.radius, config.seed, intr);
    bundle.holdout_cameras = detail::holdout_view_set(config);

    auto shoot = [&](const Camera& camera) {
        const RenderOutput out = render(camera, bundle.ground_truth, background, settings);
        return detail::quantize_8bit(detail::compose_rgba(out.rgb, out.alpha));
    };
    for (const Camera& camera : bundle.train_cameras) bundle.train_images.push_back(shoot(camera));
    for (const Camera& camera : bundle.holdout_cameras)
        bundle.holdout_images.push_back(shoot(camera));
    bundle.gt_mesh = detail::extract_surface(bundle.ground_truth, config);

    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    save_config(config, config.output_dir + "/config.cfg");
    save_splats(bundle.ground_truth, config.output_dir + "/ground_truth.ply");
    for (std::size_t i = 0; i < bundle.train_images.size(); ++i)
        save_png(bundle.train_images[i],
                 config.output_dir + "/" + detail::view_name("train", static_cast<int>(i)));
    for (std::size_t i = 0; i < bundle.holdout_images.size(); ++i)
        save_png(bundle.holdout_images[i],
                 config.output_dir + "/" + detail::view_name("holdout", static_cast<int>(i)));
    return bundle;
}

// Reloads a bundle directory written by cmd_synth. Cameras are regenerated
// from the config snapshot (they are a pure function of it); the ground-truth
// mesh is re-extracted deterministically.
inline SceneBundle load_bundle(const std::string& dir) {
    SceneBundle bundle;
    bundle.config = parse_config(dir + "/config.cfg");
    const RunConfig& config = bundle.config;
    bundle.ground_truth = load_splats(dir + "/ground_truth.ply");
    const CameraIntrinsics intr = make_intrinsics(config);
    bundle.train_cameras =
        sweep_view_set(config.true_elevation, config.train_views, config.radius, config.seed, intr);
    bundle.holdout_cameras = detail::holdout_view_set(config);
    for (int i = 0; i < config.train_views; ++i) {
        const LoadedImage li = load_image_rgba(dir + "/" + detail::view_name("train", i));
        bundle.train_images.push_back(detail::compose_rgba(li.rgb, li.mask));
    }
    for (int i = 0; i < config.holdout_views; ++i) {
        const LoadedImage li = load_image_rgba(dir + "/" + detail::view_name("holdout", i));
        bundle.holdout_images.push_back(detail::compose_rgba(li.rgb, li.mask));
    }
    bundle.gt_mesh = detail::extract_surface(bundle.ground_truth, config);
    return bundle;
}

// Scene geometry must match the images in the bundle, so those fields always
// come from the bundle's snapshot; training and extraction knobs come from
// the caller's config.
inline RunConfig merge_with_bundle(RunConfig config, const SceneBundle& bundle) {
    const RunConfig& scene = bundle.config;
    config.preset = scene.preset;
    config.true_elevation = scene.true_elevation;
    config.radius = scene.radius;
    config.fov_y = scene.fov_y;
    config.image_size = scene.image_size;
    config.train_views = scene.train_views;
    config.holdout_views = scene.holdout_views;
    config.background = scene.background;
    return config;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct FitMetricsRow {
    int iteration = 0;
    double loss = 0.0;
    std::size_t splat_count = 0;
    double timestep = 0.0;
};

// Core optimization loop. Supervision pairs the bundle's images with cameras
// rebuilt at config.elevation: when that assumption differs from the true
// elevation the views are geometrically inconsistent, which is exactly the
// failure mode the sweep harness measures. The optional observer runs after
// every step (densified = an adaptive-control event just ran).
inline TrainState fit_cloud(
    const SceneBundle& bundle, const RunConfig& config,
    std::vector<FitMetricsRow>* metrics = nullptr,
    const std::function<void(const TrainState&, bool densified)>& observer = {}) {
    const CameraIntrinsics intr = make_intrinsics(config);
    std::vector<Camera> assumed_cameras = sweep_view_set(
        config.elevation, config.train_views, config.radius, config.seed, intr);

    std::vector<PhotometricGuidance::View> views;
    views.reserve(assumed_cameras.size());
    for (std::size_t i = 0; i < assumed_cameras.size(); ++i)
        views.push_back({assumed_cameras[i], detail::rgba_rgb(bundle.train_images[i]),
                         detail::rgba_alpha(bundle.train_images[i])});
    PhotometricGuidance guidance(std::move(views), config.lambda_dssim,
                                 config.alpha_loss_weight);

    TrainConfig tc;
    tc.lambda_dssim = config.lambda_dssim;
    tc.lr_position = config.lr_position;
    tc.lr_rotation = config.lr_rotation;
    tc.lr_scale = config.lr_scale;
    tc.lr_opacity = config.lr_opacity;
    tc.lr_sh = config.lr_sh;
    tc.iterations = config.iterations;
    tc.densify_interval = config.densify_interval;
    tc.densify_grad_threshold = config.densify_grad_threshold;
    tc.prune_opacity_threshold = config.prune_opacity_threshold;
    tc.split_scale_threshold = config.split_scale_threshold;
    tc.max_splats = config.max_splats;
    tc.alpha_loss_weight = config.alpha_loss_weight;
    tc.background = Vec3::Constant(config.background);
    tc.seed = config.seed;
    tc.render = make_render_settings(config);

    InitOptions init;
    init.sh_degree = 1;
    TrainState state(init_cloud_random_sphere(static_cast<std::size_t>(config.init_splats),
                                              0.25 * config.radius, config.seed, init),
                     tc);
    for (int i = 0; i < config.iterations; ++i) {
        train_step(state, guidance, assumed_cameras);
        const bool densified = tc.densify_interval > 0 &&
                               state.iteration % tc.densify_interval == 0 &&
                               state.iteration < tc.iterations;
        if (observer) observer(state, densified);
        if (metrics &&
            (state.iteration % config.log_interval == 0 || state.iteration == tc.iterations)) {
            const double t = timestep_schedule(std::min(state.iteration - 1, tc.iterations - 1),
                                               tc.iterations, tc.t_max, tc.t_min);
            metrics->push_back({state.iteration, state.last_loss, state.cloud.size(), t});
        }
    }
    return state;
}

// Fits a cloud against the bundle named by config.input and writes
// fitted.ply, fit_metrics.csv, and a config snapshot under output_dir.
inline GaussianCloud cmd_fit(const RunConfig& config) {
    validate_config(config);
    require_input(config);
    const SceneBundle bundle = load_bundle(config.input);
    const RunConfig effective = merge_with_bundle(config, bundle);

    std::vector<FitMetricsRow> metrics;
    TrainState state = fit_cloud(bundle, effective, &metrics);

    namespace fs = std::filesystem;
    fs::create_directories(effective.output_dir);
    save_config(effective, effective.output_dir + "/config.cfg");
    save_splats(state.cloud, effective.output_dir + "/fitted.ply");
    std::vector<std::vector<std::string>> rows;
    for (const FitMetricsRow& row : metrics)
        rows.push_back({std::to_string(row.iteration), format_fixed(row.loss, 6),
                        std::to_string(row.splat_count), format_fixed(row.timestep, 4)});
    write_csv(effective.output_dir + "/fit_metrics.csv",
              {"iteration", "loss", "splat_count", "timestep"}, rows);
    return std::move(state.cloud);
}

// ---------------------------------------------------------------------------
// Extraction, baking, refinement
// ---------------------------------------------------------------------------

struct ExtractedMesh {
    TriangleMesh mesh;   // cleaned, with wedge UVs
    TextureAtlas atlas;  // stage-1 baked texture
};

// blocked grid -> marching cubes -> cleanup -> unwrap -> bake from the
// standard 26-view set (8 azimuths x 3 elevation rings + both poles).
inline ExtractedMesh extract_textured_mesh(const GaussianCloud& cloud,
                                           const RunConfig& config) {
    const TriangleMesh surface = detail::extract_surface(cloud, config);
    if (surface.empty())
        throw InvalidArgument(
            "extraction produced an empty mesh at threshold " +
            detail::format_full(config.mesh_threshold) +
            "; sweep mesh_threshold downward (the level set may sit below it)");
    auto [mesh, layout] = uv_unwrap(surface, config.atlas_size);
    CameraIntrinsics intr = make_intrinsics(config);
    const std::vector<Camera> views = baking_view_set(config.radius, intr);
    TextureAtlas atlas = bake_texture(mesh, layout, cloud, views,
                                      Vec3::Constant(config.background),
                                      make_render_settings(config));
    return {std::move(mesh), std::move(atlas)};
}

// Extracts from the archive named by config.input and writes mesh.obj (+MTL,
// +PNG atlas) under output_dir.
inline ExtractedMesh cmd_extract(const RunConfig& config) {
    validate_config(config);
    require_input(config);
    const GaussianCloud cloud = load_splats(config.input);
    ExtractedMesh out = extract_textured_mesh(cloud, config);
    std::filesystem::create_directories(config.output_dir);
    save_config(config, config.output_dir + "/config.cfg");
    save_mesh_obj(out.mesh, &out.atlas, config.output_dir + "/mesh.obj");
    return out;
}

// Re-bakes the texture of output_dir/mesh.obj from the archive named by
// config.input, using the same 26-view set.
inline TextureAtlas cmd_bake(const RunConfig& config) {
    validate_config(config);
    require_input(config);
    const GaussianCloud cloud = load_splats(config.input);
    const std::string obj_path = config.output_dir + "/mesh.obj";
    const TriangleMesh mesh = load_mesh_obj(obj_path);
    if (mesh.uvs.empty())
        throw InvalidArgument("cmd_bake: " + obj_path + " carries no UV coordinates");
    TextureAtlas layout;
    layout.width = config.atlas_size;
    layout.height = config.atlas_size;
    layout.rgb = Image(config.atlas_size, config.atlas_size, 3, 0.5);
    layout.coverage.assign(static_cast<std::size_t>(config.atlas_size) * config.atlas_size, 0);
    const std::vector<Camera> views = baking_view_set(config.radius, make_intrinsics(config));
    TextureAtlas atlas = bake_texture(mesh, layout, cloud, views,
                                      Vec3::Constant(config.background),
                                      make_render_settings(config));
    save_mesh_obj(mesh, &atlas, obj_path);
    return atlas;
}

// Stage-2 refinement of output_dir/mesh.obj's atlas, supervised by the
// bundle named by config.input through perturb-and-restore.
inline TextureAtlas cmd_refine(const RunConfig& config) {
    validate_config(config);
    require_input(config);
    const SceneBundle bundle = load_bundle(config.input);
    const RunConfig effective = merge_with_bundle(config, bundle);
    const std::string obj_path = effective.output_dir + "/mesh.obj";
    const TriangleMesh mesh = load_mesh_obj(obj_path);
    if (mesh.uvs.empty())
        throw InvalidArgument("cmd_refine: " + obj_path + " carries no UV coordinates");
    const LoadedImage li = load_image_rgba(detail::with_extension(obj_path, ".png"));

    TextureAtlas atlas;
    atlas.width = li.rgb.width;
    atlas.height = li.rgb.height;
    atlas.rgb = li.rgb;
    atlas.coverage.assign(static_cast<std::size_t>(li.rgb.width) * li.rgb.height, 1);

    const CameraIntrinsics intr = make_intrinsics(effective);
    std::vector<Camera> poses = sweep_view_set(effective.elevation, effective.train_views,
                                               effective.radius, effective.seed, intr);
    std::vector<PhotometricGuidance::View> views;
    for (std::size_t i = 0; i < poses.size(); ++i)
        views.push_back({poses[i], detail::rgba_rgb(bundle.train_images[i]),
                         detail::rgba_alpha(bundle.train_images[i])});
    PhotometricGuidance guidance(std::move(views), effective.lambda_dssim,
                                 effective.alpha_loss_weight);

    RefineConfig rc;
    rc.steps = effective.refine_steps;
    rc.noise_level = effective.noise_level;
    rc.seed = effective.seed;
    rc.background = Vec3::Constant(effective.background);
    TextureAtlas refined = refine_texture(mesh, atlas, guidance, poses, rc);
    save_mesh_obj(mesh, &refined, obj_path);
    return refined;
}

// ---------------------------------------------------------------------------
// Rendering command
// ---------------------------------------------------------------------------

// Renders the archive (.ply cloud or .obj textured mesh) named by
// config.input from one orbit pose per sweep_angles entry (elevation = the
// angle, azimuth 0), writing render_###.png under output_dir.
inline std::vector<Image> cmd_render(const RunConfig& config) {
    validate_config(config);
    require_input(config);
    namespace fs = std::filesystem;
    if (!fs::exists(config.input)) throw IoError("cmd_render: no such archive: " + config.input);
    const CameraIntrinsics intr = make_intrinsics(config);
    const bool is_mesh = config.input.size() > 4 &&
                         config.input.substr(config.input.size() - 4) == ".obj";

    GaussianCloud cloud;
    TriangleMesh mesh;
    TextureAtlas atlas;
    if (is_mesh) {
        mesh = load_mesh_obj(config.input);
        if (mesh.uvs.empty())
            throw InvalidArgument("cmd_render: " + config.input + " carries no UV coordinates");
        const LoadedImage li = load_image_rgba(detail::with_extension(config.input, ".png"));
        atlas.width = li.rgb.width;
        atlas.height = li.rgb.height;
        atlas.rgb = li.rgb;
        atlas.coverage.assign(static_cast<std::size_t>(li.rgb.width) * li.rgb.height, 1);
    } else {
        cloud = load_splats(config.input);
    }

    fs::create_directories(config.output_dir);
    const Vec3 background = Vec3::Constant(config.background);
    std::vector<Image> outputs;
    for (std::size_t i = 0; i < config.sweep_angles.size(); ++i) {
        const Camera camera = orbit_camera({config.sweep_angles[i], 0.0, config.radius}, intr);
        Image shot;
        if (is_mesh) {
            shot = render_mesh(mesh, atlas, camera, background);
        } else {
            const RenderOutput out =
                render(camera, cloud, background, make_render_settings(config));
            shot = detail::compose_rgba(out.rgb, out.alpha);
        }
        shot = detail::quantize_8bit(shot);
        save_png(shot, config.output_dir + "/" + detail::view_name("render", static_cast<int>(i)));
        outputs.push_back(std::move(shot));
    }
    return outputs;
}

// ---------------------------------------------------------------------------
// Held-out evaluation and the elevation sweep
// ---------------------------------------------------------------------------

struct HoldoutMetrics {
    double psnr = 0.0;     // over mean MSE across held-out views
    double ssim = 0.0;     // mean SSIM
    double mask_iou = 0.0;
    double chamfer = std::numeric_limits<double>::quiet_NaN();
};

// Scores a fitted cloud (and optionally its extracted surface) against the
// bundle's held-out views and ground-truth mesh.
inline HoldoutMetrics eval_holdout(const GaussianCloud& cloud, const TriangleMesh* fit_mesh,
                                   const SceneBundle& bundle, const RunConfig& config) {
    const Vec3 background = Vec3::Constant(bundle.config.background);
    const RenderSettings settings = make_render_settings(config);
    double mse_sum = 0.0;
    std::size_t mse_count = 0;
    double ssim_sum = 0.0, iou_sum = 0.0;
    for (std::size_t i = 0; i < bundle.holdout_cameras.size(); ++i) {
        const RenderOutput out =
            render(bundle.holdout_cameras[i], cloud, background, settings);
        const Image gt_rgb = detail::rgba_rgb(bundle.holdout_images[i]);
        const Image gt_alpha = detail::rgba_alpha(bundle.holdout_images[i]);
        for (std::size_t k = 0; k < gt_rgb.data.size(); ++k) {
            const double d = out.rgb.data[k] - gt_rgb.data[k];
            mse_sum += d * d;
        }
        mse_count += gt_rgb.data.size();
        ssim_sum += ssim(out.rgb, gt_rgb);
        iou_sum += mask_iou(out.alpha, gt_alpha);
    }
    HoldoutMetrics m;
    const double mse = mse_sum / static_cast<double>(mse_count);
    m.psnr = mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
    m.ssim = ssim_sum / static_cast<double>(bundle.holdout_cameras.size());
    m.mask_iou = iou_sum / static_cast<double>(bundle.holdout_cameras.size());
    if (fit_mesh && !fit_mesh->empty() && !bundle.gt_mesh.empty())
        m.chamfer = chamfer_distance(*fit_mesh, bundle.gt_mesh, 20000, 1234);
    return m;
}

struct SweepRow {
    double assumed_elevation = 0.0;
    bool ok = false;
    HoldoutMetrics metrics;
    std::size_t splat_count = 0;
    double runtime_s = 0.0;
};

struct SweepReport {
    double true_elevation = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<SweepRow> rows;  // sorted by assumed elevation
};

// Per-angle comparison strip: columns are three held-out poses; rows are the
// ground-truth image, the fitted cloud's render, and the textured mesh.
inline Image comparison_strip(const SceneBundle& bundle, const GaussianCloud& cloud,
                              const ExtractedMesh* extracted, const RunConfig& config) {
    const Vec3 background = Vec3::Constant(bundle.config.background);
    const RenderSettings settings = make_render_settings(config);
    std::vector<Image> gt_row, fit_row, mesh_row;
    const std::size_t n = std::min<std::size_t>(3, bundle.holdout_cameras.size());
    for (std::size_t i = 0; i < n; ++i) {
        const Camera& camera = bundle.holdout_cameras[i];
        gt_row.push_back(detail::rgba_rgb(bundle.holdout_images[i]));
        fit_row.push_back(render(camera, cloud, background, settings).rgb);
        if (extracted)
            mesh_row.push_back(
                detail::rgba_rgb(render_mesh(extracted->mesh, extracted->atlas, camera, background)));
    }
    std::vector<Image> rows = {detail::hconcat(gt_row), detail::hconcat(fit_row)};
    if (extracted) rows.push_back(detail::hconcat(mesh_row));
    return detail::quantize_8bit(detail::vconcat(rows));
}

// The elevation-angle experiment: for every assumed elevation in
// config.sweep_angles (sorted ascending), fit against the bundle with that
// assumption, extract a textured mesh, and score held-out PSNR/SSIM plus
// chamfer distance to the ground-truth surface. A failing angle records a
// failure row and the sweep continues.
//
// Deterministic outputs (sweep.csv, per-angle artifacts) depend only on the
// config and bundle; wall-clock timings go to the separate sweep_timing.csv
// so the main report is byte-identical across runs and worker counts.
inline SweepReport cmd_sweep(const RunConfig& config) {
    validate_config(config);
    require_input(config);
    const SceneBundle bundle = load_bundle(config.input);
    const RunConfig effective = merge_with_bundle(config, bundle);

    SweepReport report;
    report.true_elevation = bundle.config.true_elevation;
    report.seed = effective.seed;
    report.config_hash = detail::config_hash(effective);

    std::vector<double> angles = effective.sweep_angles;
    std::sort(angles.begin(), angles.end());

    namespace fs = std::filesystem;
    fs::create_directories(effective.output_dir);
    save_config(effective, effective.output_dir + "/config.cfg");

    for (double angle : angles) {
        RunConfig sub = effective;
        sub.elevation = angle;
        sub.output_dir = effective.output_dir + "/angle_" + detail::angle_label(angle);
        SweepRow row;
        row.assumed_elevation = angle;
        const auto started = std::chrono::steady_clock::now();
        try {
            fs::create_directories(sub.output_dir);
            std::vector<FitMetricsRow> metrics;
            TrainState state = fit_cloud(bundle, sub, &metrics);
            save_splats(state.cloud, sub.output_dir + "/fitted.ply");
            std::vector<std::vector<std::string>> metric_rows;
            for (const FitMetricsRow& r : metrics)
                metric_rows.push_back({std::to_string(r.iteration), format_fixed(r.loss, 6),
                                       std::to_string(r.splat_count),
                                       format_fixed(r.timestep, 4)});
            write_csv(sub.output_dir + "/fit_metrics.csv",
                      {"iteration", "loss", "splat_count", "timestep"}, metric_rows);

            std::optional<ExtractedMesh> extracted;
            try {
                extracted = extract_textured_mesh(state.cloud, sub);
                save_mesh_obj(extracted->mesh, &extracted->atlas, sub.output_dir + "/mesh.obj");
            } catch (const Error&) {
                // Mesh extraction can legitimately fail at a bad elevation
                // (the cloud may be too diffuse to cross the threshold);
                // image metrics are still reported.
            }
            row.metrics = eval_holdout(state.cloud, extracted ? &extracted->mesh : nullptr,
                                       bundle, sub);
            row.splat_count = state.cloud.size();
            row.ok = true;
            save_png(comparison_strip(bundle, state.cloud,
                                      extracted ? &*extracted : nullptr, sub),
                     sub.output_dir + "/strip.png");
        } catch (const Error&) {
            row.ok = false;
        }
        row.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        report.rows.push_back(row);
    }

    // Main report: deterministic columns only, 4-decimal rounding.
    std::vector<std::vector<std::string>> rows;
    for (const SweepRow& row : report.rows)
        rows.push_back({detail::angle_label(row.assumed_elevation),
                        row.ok ? "ok" : "error",
                        row.ok ? format_fixed(row.metrics.psnr) : "nan",
                        row.ok ? format_fixed(row.metrics.ssim) : "nan",
                        row.ok ? format_fixed(row.metrics.chamfer) : "nan",
                        std::to_string(row.splat_count)});
    std::ostringstream meta;
    meta << "# true_elevation=" << detail::angle_label(report.true_elevation)
         << " seed=" << report.seed << " config_hash=" << report.config_hash << "\n";
    {
        std::ostringstream csv;
        csv << meta.str();
        csv << "assumed_elevation,status,held_out_psnr,held_out_ssim,chamfer,splat_count\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
            csv << "\n";
        }
        detail::write_file(effective.output_dir + "/sweep.csv", std::move(csv).str());
    }
    std::vector<std::vector<std::string>> timing_rows;
    for (const SweepRow& row : report.rows)
        timing_rows.push_back(
            {detail::angle_label(row.assumed_elevation), format_fixed(row.runtime_s, 3)});
    write_csv(effective.output_dir + "/sweep_timing.csv", {"assumed_elevation", "runtime_s"},
              timing_rows);
    return report;
}

}  // namespace splat
