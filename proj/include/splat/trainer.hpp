#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "splat/camera.hpp"
#include "splat/detail/rng.hpp"
#include "splat/errors.hpp"
#include "splat/gaussian.hpp"
#include "splat/image.hpp"
#include "splat/metrics.hpp"
#include "splat/rasterizer.hpp"

namespace splat {

struct TrainConfig {
    double lambda_dssim = 0.2;       // D-SSIM weight in the photometric loss
    double lr_position = 1.6e-4;
    double lr_position_final_ratio = 0.01;  // exponential decay target
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh = 2.5e-3;
    int iterations = 3000;
    int densify_interval = 100;      // <= 0 disables adaptive control
    double densify_grad_threshold = 2e-4;
    double prune_opacity_threshold = 0.005;
    double split_scale_threshold = 0.02;  // world units; ~1% of scene extent
    double split_scale_factor = 1.6;
    int max_splats = 10000;
    double t_max = 0.98;             // timestep schedule endpoints
    double t_min = 0.02;
    double alpha_loss_weight = 0.1;
    Vec3 background = Vec3(1.0, 1.0, 1.0);
    std::uint64_t seed = 0;
    RenderSettings render;

    void validate() const {
        if (lambda_dssim < 0.0 || lambda_dssim > 1.0)
            throw InvalidArgument("TrainConfig: lambda_dssim must lie in [0,1]");
        if (iterations < 1) throw InvalidArgument("TrainConfig: iterations must be >= 1");
        if (!(densify_grad_threshold > 0.0) || !(prune_opacity_threshold > 0.0) ||
            !(split_scale_threshold > 0.0) || !(split_scale_factor > 0.0))
            throw InvalidArgument("TrainConfig: thresholds must be positive");
        if (max_splats < 1) throw InvalidArgument("TrainConfig: max_splats must be >= 1");
    }
};

struct LossResult {
    double loss = 0.0;
    Image d_rgb;
};

// loss = (1-lambda)*mean|r-t| + lambda*(1-SSIM(r,t))/2, with the exact
// gradient of both terms w.r.t. the rendered image.
inline LossResult loss_l1_dssim(const Image& rendered, const Image& target, double lambda) {
    require_same_shape(rendered, target, "loss_l1_dssim");
    if (lambda < 0.0 || lambda > 1.0)
        throw InvalidArgument("loss_l1_dssim: lambda must lie in [0,1]");
    LossResult out;
    out.d_rgb = Image(rendered.width, rendered.height, rendered.channels);
    const double inv_n = 1.0 / static_cast<double>(rendered.data.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        l1 += std::abs(d);
        out.d_rgb.data[i] = (1.0 - lambda) * inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
    l1 *= inv_n;
    if (lambda == 0.0) {
        out.loss = l1;
        return out;
    }
    const SsimResult s = ssim_with_grad(rendered, target);
    out.loss = (1.0 - lambda) * l1 + lambda * 0.5 * (1.0 - s.value);
    for (std::size_t i = 0; i < out.d_rgb.data.size(); ++i)
        out.d_rgb.data[i] += lambda * -0.5 * s.d_first.data[i];
    return out;
}

// t_max at iteration 0, decreasing linearly to t_min at the final iteration.
inline double timestep_schedule(int iteration, int total, double t_max, double t_min) {
    if (iteration < 0 || iteration >= total)
        throw InvalidArgument("timestep_schedule: iteration must lie in [0, total)");
    if (total == 1) return t_max;
    return t_max + (t_min - t_max) * static_cast<double>(iteration) /
                       static_cast<double>(total - 1);
}

struct GuidanceResult {
    double loss = 0.0;
    Image d_rgb;
    Image d_alpha;  // empty (width 0) when the source has no opinion on alpha
};

// Source of image-space supervision. evaluate() is the per-step training
// signal; restore() maps a perturbed render back toward the source's idea of
// the clean view (used by texture refinement).
class GuidanceSource {
public:
    virtual ~GuidanceSource() = default;
    virtual GuidanceResult evaluate(const RenderOutput& rendered, const Camera& camera,
                                    double timestep) = 0;
    virtual Image restore(const Image& rendered, const Camera& camera, double noise_level) = 0;
};

// Ground-truth-view oracle: supervises renders with loss_l1_dssim against a
// stored image for the exact camera pose, plus an L1 term on alpha. restore()
// simply returns the stored view, making refinement a clean regression.
class PhotometricGuidance final : public GuidanceSource {
public:
    struct View {
        Camera camera;
        Image rgb;
        Image alpha;  // may be empty => alpha unsupervised for this view
    };

    PhotometricGuidance(std::vector<View> views, double lambda, double alpha_weight = 0.1)
        : views_(std::move(views)), lambda_(lambda), alpha_weight_(alpha_weight) {
        if (views_.empty())
            throw InvalidArgument("PhotometricGuidance: need at least one oracle view");
    }

    GuidanceResult evaluate(const RenderOutput& rendered, const Camera& camera,
                            double /*timestep*/) override {
        const View& view = find(camera);
        LossResult rgb = loss_l1_dssim(rendered.rgb, view.rgb, lambda_);
        GuidanceResult out;
        out.loss = rgb.loss;
        out.d_rgb = std::move(rgb.d_rgb);
        if (alpha_weight_ > 0.0 && !view.alpha.data.empty()) {
            require_same_shape(rendered.alpha, view.alpha, "PhotometricGuidance alpha");
            out.d_alpha = Image(view.alpha.width, view.alpha.height, 1);
            const double inv_n = 1.0 / static_cast<double>(view.alpha.data.size());
            double l1 = 0.0;
            for (std::size_t i = 0; i < view.alpha.data.size(); ++i) {
                const double d = rendered.alpha.data[i] - view.alpha.data[i];
                l1 += std::abs(d);
                out.d_alpha.data[i] =
                    alpha_weight_ * inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
            }
            out.loss += alpha_weight_ * l1 * inv_n;
        }
        return out;
    }

    Image restore(const Image& /*rendered*/, const Camera& camera,
                  double /*noise_level*/) override {
        return find(camera).rgb;
    }

    const std::vector<View>& views() const { return views_; }

private:
    const View& find(const Camera& camera) const {
        for (const View& v : views_)
            if (v.camera.same_pose(camera)) return v;
        throw InvalidArgument(
            "PhotometricGuidance: camera pose is not in the configured view set");
    }

    std::vector<View> views_;
    double lambda_;
    double alpha_weight_;
};

struct TrainState {
    GaussianCloud cloud;
    TrainConfig config;
    std::vector<SplatGrads> adam_m, adam_v;
    std::vector<Vec3> grad_vec_sum;    // accumulated positional gradients
    std::vector<double> grad_mag_sum;  // accumulated gradient magnitudes
    std::vector<int> grad_count;
    std::int64_t adam_step = 0;
    int iteration = 0;
    detail::Rng rng;
    double last_loss = 0.0;
    int skipped_steps = 0;  // non-finite-gradient incidents

    TrainState(GaussianCloud c, TrainConfig cfg)
        : cloud(std::move(c)), config(cfg), rng(cfg.seed) {
        config.validate();
        reset_per_splat_state();
    }

    void reset_per_splat_state() {
        const ParamGradients z = ParamGradients::zeros_like(cloud);
        adam_m = z.splats;
        adam_v = z.splats;
        grad_vec_sum.assign(cloud.size(), Vec3::Zero());
        grad_mag_sum.assign(cloud.size(), 0.0);
        grad_count.assign(cloud.size(), 0);
    }

    double position_lr() const {
        const double frac = config.iterations <= 1
                                ? 0.0
                                : static_cast<double>(iteration) /
                                      static_cast<double>(config.iterations - 1);
        return config.lr_position * std::pow(config.lr_position_final_ratio, frac);
    }
};

namespace detail {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

inline void adam_update(double* p, double* m, double* v, const double* g, int n, double lr,
                        double bias1, double bias2) {
    for (int i = 0; i < n; ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mh = m[i] / bias1;
        const double vh = v[i] / bias2;
        p[i] -= lr * mh / (std::sqrt(vh) + kAdamEps);
    }
}

inline bool grads_finite(const ParamGradients& g) {
    for (const SplatGrads& s : g.splats) {
        if (!s.position.allFinite() || !s.rotation.allFinite() || !s.log_scale.allFinite() ||
            !std::isfinite(s.opacity_logit))
            return false;
        for (double c : s.sh_coeffs)
            if (!std::isfinite(c)) return false;
    }
    return true;
}

}  // namespace detail

// Draws a position from the splat's realized gaussian: mu + R diag(s) z with
// z standard normal (covariance R S S^T R^T by construction).
inline Vec3 sample_splat_position(const SplatParams& params, detail::Rng& rng) {
    const Vec4 q = params.rotation / params.rotation.norm();
    const Vec3 s = params.log_scale.array().exp();
    const Vec3 z(rng.normal(), rng.normal(), rng.normal());
    return params.position + quat_to_rotmat(q) * (s.asDiagonal() * z);
}

// Prune / clone / split pass. Runs in splat index order with all randomness
// drawn from state.rng, so results are deterministic.
inline void adaptive_control(TrainState& state) {
    const TrainConfig& cfg = state.config;
    const std::size_t n = state.cloud.size();

    std::vector<SplatParams> new_splats;
    std::vector<SplatGrads> new_m, new_v;
    new_splats.reserve(n);
    new_m.reserve(n);
    new_v.reserve(n);

    std::size_t survivors = 0;
    for (std::size_t i = 0; i < n; ++i)
        survivors += sigmoid(state.cloud.splats[i].opacity_logit) >= cfg.prune_opacity_threshold;

    std::size_t budget =
        static_cast<std::size_t>(cfg.max_splats) > survivors
            ? static_cast<std::size_t>(cfg.max_splats) - survivors
            : 0;
    const double step_len = state.position_lr();

    for (std::size_t i = 0; i < n; ++i) {
        const SplatParams& p = state.cloud.splats[i];
        if (sigmoid(p.opacity_logit) < cfg.prune_opacity_threshold) continue;

        const double mean_grad =
            state.grad_count[i] > 0 ? state.grad_mag_sum[i] / state.grad_count[i] : 0.0;
        const double max_scale = p.log_scale.array().exp().maxCoeff();
        const bool densify = mean_grad > cfg.densify_grad_threshold;

        if (densify && max_scale >= cfg.split_scale_threshold && budget >= 1) {
            // Split: two children sampled from the parent's density, scales
            // shrunk; the parent is consumed.
            for (int child = 0; child < 2; ++child) {
                SplatParams c = p;
                c.position = sample_splat_position(p, state.rng);
                c.log_scale = p.log_scale.array() - std::log(cfg.split_scale_factor);
                new_splats.push_back(std::move(c));
                new_m.push_back(SplatGrads{});
                new_m.back().sh_coeffs.assign(p.sh_coeffs.size(), 0.0);
                new_v.push_back(new_m.back());
            }
            budget -= 1;  // net growth of a split is one splat
            continue;
        }

        new_splats.push_back(p);
        new_m.push_back(state.adam_m[i]);
        new_v.push_back(state.adam_v[i]);

        if (densify && max_scale < cfg.split_scale_threshold && budget >= 1) {
            // Clone: copy offset one positional-learning-rate step along the
            // descent direction of the accumulated gradient.
            SplatParams c = p;
            const double gn = state.grad_vec_sum[i].norm();
            if (gn > 0.0) c.position -= step_len * state.grad_vec_sum[i] / gn;
            new_splats.push_back(std::move(c));
            new_m.push_back(SplatGrads{});
            new_m.back().sh_coeffs.assign(p.sh_coeffs.size(), 0.0);
            new_v.push_back(new_m.back());
            budget -= 1;
        }
    }

    state.cloud.splats = std::move(new_splats);
    state.adam_m = std::move(new_m);
    state.adam_v = std::move(new_v);
    state.grad_vec_sum.assign(state.cloud.size(), Vec3::Zero());
    state.grad_mag_sum.assign(state.cloud.size(), 0.0);
    state.grad_count.assign(state.cloud.size(), 0);
}

// One optimization step: sample a camera from the pool, render, query the
// guidance, backpropagate, and apply per-group adaptive-moment updates.
// Every densify_interval iterations runs adaptive_control.
inline void train_step(TrainState& state, GuidanceSource& guidance,
                       std::span<const Camera> camera_pool) {
    if (camera_pool.empty()) throw InvalidArgument("train_step: camera pool is empty");
    const TrainConfig& cfg = state.config;
    const Camera& cam = camera_pool[state.rng.uniform_index(camera_pool.size())];
    const double t = timestep_schedule(std::min(state.iteration, cfg.iterations - 1),
                                       cfg.iterations, cfg.t_max, cfg.t_min);

    const RenderOutput rendered = render(cam, state.cloud, cfg.background, cfg.render);
    GuidanceResult g = guidance.evaluate(rendered, cam, t);
    state.last_loss = g.loss;

    const ParamGradients grads =
        render_backward(cam, state.cloud, g.d_rgb, g.d_alpha.data.empty() ? nullptr : &g.d_alpha,
                        cfg.background, cfg.render);

    if (!detail::grads_finite(grads)) {
        ++state.skipped_steps;
    } else {
        ++state.adam_step;
        const double bias1 = 1.0 - std::pow(detail::kAdamBeta1, static_cast<double>(state.adam_step));
        const double bias2 = 1.0 - std::pow(detail::kAdamBeta2, static_cast<double>(state.adam_step));
        const double lr_pos = state.position_lr();
        for (std::size_t i = 0; i < state.cloud.size(); ++i) {
            SplatParams& p = state.cloud.splats[i];
            const SplatGrads& gr = grads.splats[i];
            SplatGrads& m = state.adam_m[i];
            SplatGrads& v = state.adam_v[i];
            detail::adam_update(p.position.data(), m.position.data(), v.position.data(),
                                gr.position.data(), 3, lr_pos, bias1, bias2);
            detail::adam_update(p.rotation.data(), m.rotation.data(), v.rotation.data(),
                                gr.rotation.data(), 4, cfg.lr_rotation, bias1, bias2);
            detail::adam_update(p.log_scale.data(), m.log_scale.data(), v.log_scale.data(),
                                gr.log_scale.data(), 3, cfg.lr_scale, bias1, bias2);
            detail::adam_update(&p.opacity_logit, &m.opacity_logit, &v.opacity_logit,
                                &gr.opacity_logit, 1, cfg.lr_opacity, bias1, bias2);
            detail::adam_update(p.sh_coeffs.data(), m.sh_coeffs.data(), v.sh_coeffs.data(),
                                gr.sh_coeffs.data(), static_cast<int>(p.sh_coeffs.size()),
                                cfg.lr_sh, bias1, bias2);

            const double gn = gr.position.norm();
            if (gn > 0.0) {
                state.grad_vec_sum[i] += gr.position;
                state.grad_mag_sum[i] += gn;
                state.grad_count[i] += 1;
            }
        }
    }

    ++state.iteration;
    if (cfg.densify_interval > 0 && state.iteration % cfg.densify_interval == 0 &&
        state.iteration < cfg.iterations)
        adaptive_control(state);
}

}  // namespace splat
