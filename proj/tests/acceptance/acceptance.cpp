// Acceptance gate: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. Run with a list of criterion numbers
// (default: all), plus --full for the long-form elevation study.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "splat/splat.hpp"
#include "../unit/helpers.hpp"

using namespace splat;
using test_helpers::ScratchDir;

namespace {

struct CriterionResult {
    bool pass = false;
    std::string details;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw IoError("acceptance: cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string human(double v, int decimals = 4) { return format_fixed(v, decimals); }

// ---------------------------------------------------------------------------
// 1. Rasterizer gradients vs central finite differences
// ---------------------------------------------------------------------------

CriterionResult criterion_gradients(bool) {
    const int scenes = 100;
    const double eps = 1e-5;
    RenderSettings settings = RenderSettings::exact();
    settings.workers = 1;

    std::size_t params_checked = 0;
    double worst = 0.0;
    std::string worst_where;

    for (int s = 0; s < scenes; ++s) {
        detail::Rng rng(9000 + static_cast<std::uint64_t>(s));
        GaussianCloud cloud =
            test_helpers::random_cloud(1 + s % 10, 100 + static_cast<std::uint64_t>(s), s % 3);
        CameraIntrinsics intr;
        intr.width = 32;
        intr.height = 32;
        intr.fov_y_deg = rng.uniform(35.0, 70.0);
        OrbitSpec orbit;
        orbit.elevation_deg = rng.uniform(-60.0, 60.0);
        orbit.azimuth_deg = rng.uniform(0.0, 360.0);
        orbit.radius = rng.uniform(1.6, 2.6);
        const Camera camera = orbit_camera(orbit, intr);
        const Vec3 background(rng.uniform(), rng.uniform(), rng.uniform());

        Image d_rgb(32, 32, 3);
        Image d_alpha(32, 32, 1);
        for (double& v : d_rgb.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : d_alpha.data) v = rng.uniform(-1.0, 1.0);

        const auto scalar_loss = [&](const GaussianCloud& c) {
            const RenderOutput out = render(camera, c, background, settings);
            double loss = 0.0;
            for (std::size_t i = 0; i < out.rgb.data.size(); ++i)
                loss += d_rgb.data[i] * out.rgb.data[i];
            for (std::size_t i = 0; i < out.alpha.data.size(); ++i)
                loss += d_alpha.data[i] * out.alpha.data[i];
            return loss;
        };
        const ParamGradients grads =
            render_backward(camera, cloud, d_rgb, &d_alpha, background, settings);

        const auto check = [&](double* slot, double analytic, const char* what, std::size_t i) {
            const double saved = *slot;
            *slot = saved + eps;
            const double hi = scalar_loss(cloud);
            *slot = saved - eps;
            const double lo = scalar_loss(cloud);
            *slot = saved;
            const double numeric = (hi - lo) / (2.0 * eps);
            const double err = std::abs(numeric - analytic);
            const double bound = 1e-3 * std::max(std::abs(numeric), std::abs(analytic)) + 1e-6;
            ++params_checked;
            const double ratio = err / bound;
            if (ratio > worst) {
                worst = ratio;
                std::ostringstream os;
                os << "scene " << s << " splat " << i << " " << what << " analytic " << analytic
                   << " numeric " << numeric;
                worst_where = os.str();
            }
        };

        for (std::size_t i = 0; i < cloud.size(); ++i) {
            SplatParams& p = cloud.splats[i];
            const SplatGrads& g = grads.splats[i];
            for (int a = 0; a < 3; ++a) check(&p.position[a], g.position[a], "position", i);
            for (int a = 0; a < 4; ++a) check(&p.rotation[a], g.rotation[a], "rotation", i);
            for (int a = 0; a < 3; ++a) check(&p.log_scale[a], g.log_scale[a], "log_scale", i);
            check(&p.opacity_logit, g.opacity_logit, "opacity_logit", i);
            for (std::size_t a = 0; a < p.sh_coeffs.size(); ++a)
                check(&p.sh_coeffs[a], g.sh_coeffs[a], "sh", i);
        }
    }

    CriterionResult r;
    r.pass = worst <= 1.0;
    std::ostringstream os;
    os << scenes << " scenes, " << params_checked << " params, worst error ratio "
       << human(worst, 4) << " of tolerance";
    if (!r.pass) os << " [" << worst_where << "]";
    r.details = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 2. Blocked density grid vs naive mixture sum
// ---------------------------------------------------------------------------

CriterionResult criterion_density(bool) {
    const int clouds = 20;
    const int blocks = 16, sub = 8;
    const int res = blocks * sub;  // 128
    double worst = 0.0;

    for (int s = 0; s < clouds; ++s) {
        const std::size_t count = 25 * (1 + static_cast<std::size_t>(s));  // 25..500
        const GaussianCloud cloud =
            test_helpers::random_cloud(count, 4000 + static_cast<std::uint64_t>(s), 0);
        const auto [lo, hi] = default_grid_bounds(cloud);
        const DensityGrid grid = blocked_density_grid(cloud, lo, hi, blocks, sub, 1);

        // Naive oracle: per point, sum every splat's full Gaussian term. A
        // term is skipped only when its exponent is provably below e^-46
        // (|x-mu|^2 > 92 * lambda_max), which cannot move any sum by more
        // than 500 * 1e-20 -- far under the 1e-4 gate.
        struct OracleSplat {
            detail::DensitySplat d;
            Vec3 mean;
            double box = 0.0;  // half-width of the exp(-46) cube
        };
        std::vector<OracleSplat> oracle;
        oracle.reserve(cloud.size());
        for (const SplatParams& p : cloud.splats) {
            OracleSplat o;
            o.d = detail::make_density_splat(p);
            o.mean = p.position;
            const RealizedSplat real = realize(p);
            const Eigen::SelfAdjointEigenSolver<Mat3> eig(real.cov.m);
            o.box = std::sqrt(92.0 * eig.eigenvalues().maxCoeff());
            oracle.push_back(o);
        }

        const Vec3 spacing = grid.spacing();
        std::vector<double> naive(grid.values.size(), 0.0);
        for (const OracleSplat& o : oracle) {
            // Grid-index window covered by the splat's cube (conservative).
            const auto lo_idx = [&](double c, double origin, double step) {
                return std::max(0, static_cast<int>(std::ceil((c - o.box - origin) / step)) - 1);
            };
            const auto hi_idx = [&](double c, double origin, double step) {
                return std::min(res - 1,
                                static_cast<int>(std::floor((c + o.box - origin) / step)) + 1);
            };
            const int x0 = lo_idx(o.mean.x(), lo.x(), spacing.x());
            const int x1 = hi_idx(o.mean.x(), lo.x(), spacing.x());
            const int y0 = lo_idx(o.mean.y(), lo.y(), spacing.y());
            const int y1 = hi_idx(o.mean.y(), lo.y(), spacing.y());
            const int z0 = lo_idx(o.mean.z(), lo.z(), spacing.z());
            const int z1 = hi_idx(o.mean.z(), lo.z(), spacing.z());
            for (int z = z0; z <= z1; ++z)
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        const Vec3 pt = grid.world_point(x, y, z);
                        const double rx = pt.x() - o.mean.x();
                        const double ry = pt.y() - o.mean.y();
                        const double rz = pt.z() - o.mean.z();
                        const double q =
                            rx * (o.d.i00 * rx + o.d.i01 * ry + o.d.i02 * rz) +
                            ry * (o.d.i01 * rx + o.d.i11 * ry + o.d.i12 * rz) +
                            rz * (o.d.i02 * rx + o.d.i12 * ry + o.d.i22 * rz);
                        if (q > 92.0) continue;
                        naive[static_cast<std::size_t>((z * res + y) * res + x)] +=
                            o.d.opacity * std::exp(-0.5 * q);
                    }
        }

        for (std::size_t i = 0; i < naive.size(); ++i)
            worst = std::max(worst, std::abs(naive[i] - grid.values[i]));
    }

    CriterionResult r;
    r.pass = worst <= 1e-4;
    std::ostringstream os;
    os << clouds << " clouds at " << res << "^3, max abs deviation " << worst;
    r.details = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 3. Marching cubes on a single isotropic splat
// ---------------------------------------------------------------------------

CriterionResult criterion_mesh_oracle(bool) {
    const double sigma = 0.2;
    const double threshold = 0.5;
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    SplatParams p;
    p.log_scale = Vec3::Constant(std::log(sigma));
    p.opacity_logit = logit(1.0 - 1e-9);
    p.sh_coeffs = {1.0, 1.0, 1.0};
    cloud.splats.push_back(p);

    const Vec3 lo = Vec3::Constant(-0.6), hi = Vec3::Constant(0.6);
    const DensityGrid grid = blocked_density_grid(cloud, lo, hi, 16, 8, 1);
    const TriangleMesh mesh = marching_cubes(grid, threshold, 1);

    // Closed 2-manifold: every undirected edge borders exactly two faces.
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const int a = t[static_cast<std::size_t>(e)];
            const int b = t[static_cast<std::size_t>((e + 1) % 3)];
            ++edge_count[{std::min(a, b), std::max(a, b)}];
        }
    bool closed = !mesh.empty();
    for (const auto& [edge, n] : edge_count) closed = closed && n == 2;
    const long long euler = static_cast<long long>(mesh.vertices.size()) -
                            static_cast<long long>(edge_count.size()) +
                            static_cast<long long>(mesh.triangles.size());

    const double want_r = sigma * std::sqrt(2.0 * std::log(2.0));
    const double max_spacing = grid.spacing().maxCoeff();
    double worst_dev = 0.0;
    for (const Vec3& v : mesh.vertices)
        worst_dev = std::max(worst_dev, std::abs(v.norm() - want_r));

    CriterionResult r;
    r.pass = closed && euler == 2 && worst_dev <= 1.5 * max_spacing;
    std::ostringstream os;
    os << "V=" << mesh.vertices.size() << " E=" << edge_count.size()
       << " F=" << mesh.triangles.size() << " euler=" << euler << (closed ? " closed" : " OPEN")
       << ", max radial dev " << human(worst_dev / max_spacing, 3) << " spacings";
    r.details = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 4/5/6/9. Shared synthetic-scene fitting configs
// ---------------------------------------------------------------------------

RunConfig fit_scene_config(const std::string& out) {
    RunConfig cfg;
    cfg.output_dir = out;
    cfg.preset = "blob";
    cfg.true_elevation = 0.0;
    cfg.elevation = 0.0;
    cfg.image_size = 64;
    cfg.train_views = 24;
    cfg.holdout_views = 8;
    cfg.init_splats = 200;
    cfg.iterations = 1200;
    cfg.densify_interval = 100;
    // Harsh pruning concentrates opacity into few solid splats, which keeps
    // the mixture density crisp enough for level-set extraction; a loose
    // budget instead yields thousands of faint splats that render perfectly
    // but never cross the iso threshold.
    cfg.prune_opacity_threshold = 0.1;
    cfg.max_splats = 600;
    cfg.log_interval = 100;
    cfg.mesh_threshold = 0.5;  // ground-truth surface
    cfg.atlas_size = 1024;
    cfg.seed = 7;
    cfg.workers = 1;
    return cfg;
}

// Level-set threshold for surfaces extracted from *fitted* clouds (found
// empirically; the fitted density is softer than the synthetic original's).
constexpr double kFitMeshThreshold = 0.3;

// Reduced elevation-sweep profile used by the CI gate and the determinism
// criterion; --full widens it to the complete seven-angle study.
RunConfig sweep_ci_config(const std::string& out) {
    RunConfig cfg = fit_scene_config(out);
    cfg.image_size = 48;
    cfg.iterations = 400;
    cfg.init_splats = 150;
    cfg.max_splats = 1500;
    cfg.sweep_angles = {-30, 0, 30};
    return cfg;
}

double scene_extent(const TriangleMesh& mesh) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
}

CriterionResult criterion_fit(bool) {
    ScratchDir dir("splat_acceptance_fit");
    RunConfig cfg = fit_scene_config(dir.file("bundle"));
    const SceneBundle bundle = cmd_synth(cfg);

    TrainState state = fit_cloud(bundle, merge_with_bundle(cfg, bundle));
    const HoldoutMetrics before = eval_holdout(state.cloud, nullptr, bundle, cfg);

    double chamfer = std::numeric_limits<double>::quiet_NaN();
    std::string mesh_note;
    try {
        RunConfig ex = cfg;
        ex.mesh_threshold = kFitMeshThreshold;
        const ExtractedMesh extracted = extract_textured_mesh(state.cloud, ex);
        chamfer = chamfer_distance(extracted.mesh, bundle.gt_mesh, 20000, 1234);
    } catch (const Error& e) {
        mesh_note = std::string("; extraction failed: ") + e.what();
    }
    const double extent = scene_extent(bundle.gt_mesh);

    CriterionResult r;
    r.pass = before.psnr >= 25.0 && std::isfinite(chamfer) && chamfer < 0.05 * extent;
    std::ostringstream os;
    os << "held-out psnr " << human(before.psnr, 2) << " dB (need >= 25), chamfer "
       << human(chamfer) << " = " << human(100.0 * chamfer / extent, 2) << "% of extent "
       << human(extent, 3) << " (need < 5%), " << state.cloud.size() << " splats" << mesh_note;
    r.details = os.str();
    return r;
}

CriterionResult criterion_sweep(bool full) {
    ScratchDir dir("splat_acceptance_sweep");
    RunConfig scene = full ? fit_scene_config(dir.file("bundle")) : sweep_ci_config(dir.file("bundle"));
    cmd_synth(scene);

    RunConfig sw = scene;
    sw.input = dir.file("bundle");
    sw.output_dir = dir.file("sweep0");
    sw.mesh_threshold = kFitMeshThreshold;
    if (full) sw.sweep_angles = {-30, -20, -10, 0, 10, 20, 30};
    const SweepReport report = cmd_sweep(sw);

    std::map<double, double> psnr;
    bool all_ok = true;
    for (const SweepRow& row : report.rows) {
        psnr[row.assumed_elevation] = row.metrics.psnr;
        all_ok = all_ok && row.ok;
    }
    const auto argmax = std::max_element(
        report.rows.begin(), report.rows.end(),
        [](const SweepRow& a, const SweepRow& b) { return a.metrics.psnr < b.metrics.psnr; });

    bool pass = all_ok && argmax != report.rows.end() && argmax->assumed_elevation == 0.0;
    std::ostringstream os;
    os << "true 0: argmax " << argmax->assumed_elevation << " (psnr";
    for (const SweepRow& row : report.rows)
        os << " " << row.assumed_elevation << ":" << human(row.metrics.psnr, 2);
    os << ")";

    if (full) {
        const bool order = psnr.at(-30.0) < psnr.at(-10.0) && psnr.at(30.0) < psnr.at(10.0);
        pass = pass && order;
        os << (order ? ", |30| < |10| holds" : ", |30| < |10| VIOLATED");

        // Second scene shot from 30 degrees up: the matched row must win again.
        RunConfig scene30 = scene;
        scene30.true_elevation = 30.0;
        scene30.output_dir = dir.file("bundle30");
        cmd_synth(scene30);
        RunConfig sw30 = sw;
        sw30.input = dir.file("bundle30");
        sw30.output_dir = dir.file("sweep30");
        sw30.true_elevation = 30.0;
        const SweepReport rep30 = cmd_sweep(sw30);
        const auto arg30 = std::max_element(
            rep30.rows.begin(), rep30.rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.metrics.psnr < b.metrics.psnr; });
        pass = pass && arg30 != rep30.rows.end() && arg30->assumed_elevation == 30.0;
        os << "; true 30: argmax " << arg30->assumed_elevation << " (psnr";
        for (const SweepRow& row : rep30.rows)
            os << " " << row.assumed_elevation << ":" << human(row.metrics.psnr, 2);
        os << ")";
    }

    CriterionResult r;
    r.pass = pass;
    r.details = os.str();
    return r;
}

CriterionResult criterion_adaptive(bool) {
    ScratchDir dir("splat_acceptance_adaptive");
    RunConfig cfg = fit_scene_config(dir.file("bundle"));
    const SceneBundle bundle = cmd_synth(cfg);

    int events = 0;
    double min_opacity = 1.0;
    std::size_t max_count = 0;
    bool opacity_ok = true, budget_ok = true;
    fit_cloud(bundle, merge_with_bundle(cfg, bundle), nullptr,
              [&](const TrainState& state, bool densified) {
                  max_count = std::max(max_count, state.cloud.size());
                  budget_ok = budget_ok &&
                              state.cloud.size() <= static_cast<std::size_t>(cfg.max_splats);
                  if (!densified) return;
                  ++events;
                  for (const SplatParams& p : state.cloud.splats) {
                      const double a = sigmoid(p.opacity_logit);
                      min_opacity = std::min(min_opacity, a);
                      opacity_ok = opacity_ok && a >= 0.005;
                  }
              });

    CriterionResult r;
    r.pass = events > 0 && opacity_ok && budget_ok;
    std::ostringstream os;
    os << events << " densify events, min post-densify opacity " << human(min_opacity, 4)
       << " (need >= 0.005), peak count " << max_count << " <= budget " << cfg.max_splats;
    r.details = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 7. Loss against an independent SSIM reference
// ---------------------------------------------------------------------------

double reference_ssim(const Image& a, const Image& b) {
    const auto& k = detail::ssim_kernel();
    const int rad = detail::kSsimRadius;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double wsum = 0, ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (int dy = -rad; dy <= rad; ++dy)
                    for (int dx = -rad; dx <= rad; ++dx) {
                        const int px = x + dx, py = y + dy;
                        if (px < 0 || px >= a.width || py < 0 || py >= a.height) continue;
                        const double w = k[static_cast<std::size_t>(dx + rad)] *
                                         k[static_cast<std::size_t>(dy + rad)];
                        const double va = a.at(px, py, c), vb = b.at(px, py, c);
                        wsum += w;
                        ma += w * va;
                        mb += w * vb;
                        maa += w * va * va;
                        mbb += w * vb * vb;
                        mab += w * va * vb;
                    }
                ma /= wsum;
                mb /= wsum;
                const double var_a = maa / wsum - ma * ma;
                const double var_b = mbb / wsum - mb * mb;
                const double cov = mab / wsum - ma * mb;
                total += ((2 * ma * mb + detail::kSsimC1) * (2 * cov + detail::kSsimC2)) /
                         ((ma * ma + mb * mb + detail::kSsimC1) *
                          (var_a + var_b + detail::kSsimC2));
            }
    return total / static_cast<double>(a.data.size());
}

CriterionResult criterion_loss(bool) {
    detail::Rng rng(777);
    std::vector<std::pair<Image, Image>> pairs;
    {
        // Smooth ramp vs rippled ramp.
        Image a(64, 48, 3), b(64, 48, 3);
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 64; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double base = (x / 63.0 + y / 47.0 + c) / 3.0;
                    a.at(x, y, c) = base;
                    b.at(x, y, c) = std::clamp(
                        base + 0.08 * std::sin(0.4 * x + 0.7 * y + c), 0.0, 1.0);
                }
        pairs.emplace_back(a, b);
    }
    {
        // Independent noise.
        Image a(32, 32, 3), b(32, 32, 3);
        for (double& v : a.data) v = rng.uniform();
        for (double& v : b.data) v = rng.uniform();
        pairs.emplace_back(a, b);
    }
    {
        // Checkerboard vs one-pixel shift.
        Image a(40, 40, 1), b(40, 40, 1);
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) {
                a.at(x, y, 0) = ((x / 4 + y / 4) % 2) ? 1.0 : 0.0;
                b.at(x, y, 0) = (((x + 1) / 4 + y / 4) % 2) ? 1.0 : 0.0;
            }
        pairs.emplace_back(a, b);
    }

    double worst = 0.0;
    bool exact_ok = true;
    for (const auto& [a, b] : pairs) {
        double l1 = 0.0;
        for (std::size_t i = 0; i < a.data.size(); ++i) l1 += std::abs(a.data[i] - b.data[i]);
        // Mean as sum * (1/n): the same rounding the library uses, so the
        // lambda = 0 comparison below can demand bit equality.
        l1 *= 1.0 / static_cast<double>(a.data.size());
        const double dssim = (1.0 - reference_ssim(a, b)) / 2.0;

        for (double lambda : {0.2, 0.5, 1.0}) {
            const double got = loss_l1_dssim(a, b, lambda).loss;
            const double want = (1.0 - lambda) * l1 + lambda * dssim;
            worst = std::max(worst, std::abs(got - want));
        }
        // Lambda 0 collapses to plain L1, bit for bit.
        exact_ok = exact_ok && loss_l1_dssim(a, b, 0.0).loss == l1;
        // Identical inputs score exactly zero at any mix.
        for (double lambda : {0.0, 0.3, 1.0})
            exact_ok = exact_ok && loss_l1_dssim(a, a, lambda).loss == 0.0;
    }

    CriterionResult r;
    r.pass = worst <= 1e-6 && exact_ok;
    std::ostringstream os;
    os << pairs.size() << " pairs x 3 mixes, max |loss - reference| " << worst
       << (exact_ok ? ", exact L1/zero identities hold" : ", EXACT IDENTITY VIOLATED");
    r.details = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 8. Serialization round-trips
// ---------------------------------------------------------------------------

bool bit_equal(double a, double b) {
    std::uint64_t ua, ub;
    std::memcpy(&ua, &a, sizeof a);
    std::memcpy(&ub, &b, sizeof b);
    return ua == ub;
}

CriterionResult criterion_serialization(bool) {
    ScratchDir dir("splat_acceptance_io");
    const std::string ply = dir.file("roundtrip.ply");

    int clouds_ok = 0;
    for (int s = 0; s < 1000; ++s) {
        const GaussianCloud cloud = test_helpers::random_cloud(
            1 + static_cast<std::size_t>(s) % 37, 20000 + static_cast<std::uint64_t>(s), s % 4);
        save_splats(cloud, ply);
        const GaussianCloud back = load_splats(ply);
        bool same = back.sh_degree == cloud.sh_degree && back.size() == cloud.size();
        for (std::size_t i = 0; same && i < cloud.size(); ++i) {
            const SplatParams& x = cloud.splats[i];
            const SplatParams& y = back.splats[i];
            for (int a = 0; a < 3; ++a) same = same && bit_equal(x.position[a], y.position[a]);
            for (int a = 0; a < 4; ++a) same = same && bit_equal(x.rotation[a], y.rotation[a]);
            for (int a = 0; a < 3; ++a)
                same = same && bit_equal(x.log_scale[a], y.log_scale[a]);
            same = same && bit_equal(x.opacity_logit, y.opacity_logit);
            same = same && x.sh_coeffs.size() == y.sh_coeffs.size();
            for (std::size_t a = 0; same && a < x.sh_coeffs.size(); ++a)
                same = same && bit_equal(x.sh_coeffs[a], y.sh_coeffs[a]);
        }
        clouds_ok += same ? 1 : 0;
    }

    // OBJ self-parse on a marching-cubes sphere (with unwrap UVs) and on a
    // hand-built cube.
    GaussianCloud ball;
    ball.sh_degree = 0;
    SplatParams p;
    p.log_scale = Vec3::Constant(std::log(0.25));
    p.opacity_logit = logit(0.995);
    p.sh_coeffs = {1.0, 1.0, 1.0};
    ball.splats.push_back(p);
    const DensityGrid grid =
        blocked_density_grid(ball, Vec3::Constant(-0.8), Vec3::Constant(0.8), 8, 8, 1);
    TriangleMesh sphere = marching_cubes(grid, 0.5, 1);
    auto [unwrapped, layout] = uv_unwrap(sphere, 512);
    (void)layout;
    save_mesh_obj(unwrapped, nullptr, dir.file("sphere.obj"));
    const TriangleMesh sphere_back = load_mesh_obj(dir.file("sphere.obj"));

    double obj_dev = 0.0;
    bool obj_ok = sphere_back.triangles == unwrapped.triangles &&
                  sphere_back.vertices.size() == unwrapped.vertices.size() &&
                  sphere_back.uvs.size() == unwrapped.uvs.size();
    for (std::size_t i = 0; obj_ok && i < unwrapped.vertices.size(); ++i)
        obj_dev = std::max(obj_dev,
                           (sphere_back.vertices[i] - unwrapped.vertices[i]).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; obj_ok && i < unwrapped.uvs.size(); ++i)
        obj_dev = std::max(obj_dev,
                           (sphere_back.uvs[i] - unwrapped.uvs[i]).cwiseAbs().maxCoeff());

    CriterionResult r;
    r.pass = clouds_ok == 1000 && obj_ok && obj_dev <= 1e-6;
    std::ostringstream os;
    os << clouds_ok << "/1000 clouds bit-exact, obj max deviation " << obj_dev << " over "
       << unwrapped.vertices.size() << " vertices";
    if (!obj_ok) os << " (TOPOLOGY MISMATCH)";
    r.details = os.str();
    return r;
}

// ---------------------------------------------------------------------------
// 9. Sweep determinism across runs and worker counts
// ---------------------------------------------------------------------------

CriterionResult criterion_determinism(bool) {
    ScratchDir dir("splat_acceptance_det");
    RunConfig scene = sweep_ci_config(dir.file("bundle"));
    cmd_synth(scene);

    RunConfig sw = scene;
    sw.input = dir.file("bundle");
    sw.output_dir = dir.file("s1");
    sw.mesh_threshold = kFitMeshThreshold;
    sw.workers = 1;
    cmd_sweep(sw);
    sw.output_dir = dir.file("s2");
    sw.workers = 2;
    cmd_sweep(sw);

    const std::string a = slurp(dir.file("s1/sweep.csv"));
    const std::string b = slurp(dir.file("s2/sweep.csv"));

    CriterionResult r;
    r.pass = !a.empty() && a == b;
    std::ostringstream os;
    os << "sweep.csv " << (r.pass ? "identical" : "DIFFERS") << " across workers 1 vs 2 ("
       << a.size() << " bytes)";
    r.details = os.str();
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    struct Entry {
        const char* name;
        CriterionResult (*fn)(bool);
    };
    const Entry entries[] = {
        {"rasterizer gradients", criterion_gradients},
        {"blocked density equivalence", criterion_density},
        {"marching-cubes sphere fidelity", criterion_mesh_oracle},
        {"fit convergence", criterion_fit},
        {"elevation sweep", criterion_sweep},
        {"adaptive-control invariants", criterion_adaptive},
        {"loss correctness", criterion_loss},
        {"serialization round-trip", criterion_serialization},
        {"sweep determinism", criterion_determinism},
    };

    bool full = false;
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--full") {
            full = true;
        } else {
            const int n = std::atoi(arg.c_str());
            if (n < 1 || n > 9) {
                std::fprintf(stderr, "usage: %s [--full] [criterion 1-9 ...]\n", argv[0]);
                return 2;
            }
            wanted.push_back(n);
        }
    }
    if (wanted.empty())
        for (int n = 1; n <= 9; ++n) wanted.push_back(n);

    int failures = 0;
    for (int n : wanted) {
        const Entry& e = entries[n - 1];
        const auto started = std::chrono::steady_clock::now();
        CriterionResult res;
        try {
            res = e.fn(full);
        } catch (const std::exception& ex) {
            res.pass = false;
            res.details = std::string("unhandled exception: ") + ex.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::printf("criterion %d (%s): %s (%s, %.1fs)\n", n, e.name,
                    res.pass ? "PASS" : "FAIL", res.details.c_str(), secs);
        std::fflush(stdout);
        failures += res.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
