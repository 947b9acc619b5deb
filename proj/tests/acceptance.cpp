// Acceptance run: one PASS/FAIL line per criterion.
// usage: udfforge_acceptance <cli> <desk.json> <scratch dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "support.hpp"
#include "udfforge/config.hpp"
#include "udfforge/geometry.hpp"
#include "udfforge/metrics.hpp"
#include "udfforge/parallel.hpp"
#include "udfforge/scene.hpp"
#include "udfforge/training.hpp"

using namespace udf;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 10.0;
constexpr double kPullTol = 1e-10;
constexpr double kPullSeconds = 1.0;
constexpr double kLossRelTol = 1e-12;
constexpr double kLossSeconds = 10.0;
constexpr double kTargetTol = 1e-12;
constexpr double kBandMae = 0.01;
constexpr double kChamfer = 0.02;
constexpr double kTrainSeconds = 20.0 * 60.0;
constexpr double kRadiusCells = 2.0;
constexpr double kAblationRatio = 1.3;
constexpr double kDenoiseKeep = 0.5;
constexpr double kNoProjReduction = 0.1;
constexpr double kDeformMean = 0.02;
constexpr double kDeformSlack = 1e-6;

constexpr double kBand = 0.3;
constexpr int kBandRes = 48;
constexpr int kMeshRes = 64;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;
std::map<int, std::string> lines;

void report(int id, bool ok, const std::string& detail) {
  lines[id] = fmt("criterion %d: %s  %s", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fprintf(stderr, "[done %d]\n", id);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Trained {
  TrainResult result;
  double seconds = 0.0;
};

Trained run(const SyntheticScene& scene, const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Trained t{train(normalize_cloud(scene.cloud), config), 0.0};
  t.seconds = seconds_since(t0);
  return t;
}

double band_mae(const Field& f, const Field& oracle) {
  return udf_error(f, oracle, BBox{}, Resolution::cubic(kBandRes), kBand).mae;
}

double rms_oracle(const SurfelCloud& cloud, const Field& oracle) {
  double s = 0.0;
  for (const auto& x : cloud.surfels) {
    const double d = oracle.eval(x.center);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(cloud.size()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

// Runs the command twice into the same directory and compares every file.
bool repeatable(const std::string& cmd, const fs::path& out, std::string& why) {
  fs::remove_all(out);
  if (shell(cmd) != 0) {
    why = "exit status";
    return false;
  }
  std::map<std::string, std::string> first;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (e.is_regular_file()) first[fs::relative(e.path(), out).string()] = slurp(e.path());
  }
  if (shell(cmd) != 0) {
    why = "exit status on repeat";
    return false;
  }
  std::size_t seen = 0;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), out).string();
    auto it = first.find(rel);
    if (it == first.end() || it->second != slurp(e.path())) {
      why = rel;
      return false;
    }
    ++seen;
  }
  return seen == first.size() && seen > 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::fprintf(stderr, "usage: %s <cli> <desk.json> <scratch dir>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const RunConfig desk = load_run_config(argv[2]);
  const fs::path scratch = argv[3];
  fs::create_directories(scratch);
  set_max_threads(1);

  // 5: clean disk, desk budget.
  const SyntheticScene disk = gen_scene(SceneKind::Disk, 2000, 0.0, desk.seed);
  const Trained disk_run = run(disk, desk.train);
  const NeuralField& disk_field = disk_run.result.field;
  {
    const UdfError e = udf_error(disk_field, disk.oracle, BBox{}, Resolution::cubic(kBandRes), kBand);
    Rng rng(desk.seed);
    const SurfacePoints sp = collect_surface_points(disk_field, 10000, desk.eval.residual_threshold, rng);
    const double cd = sp.points.empty() ? INFINITY : chamfer(sp.points, disk.gt_samples, ChamferMode::Euclidean);
    const ExtractedMesh m =
        extract_mesh(disk_field, BBox{}, Resolution::cubic(kMeshRes), default_iso_band(BBox{}, Resolution::cubic(kMeshRes)));
    const std::size_t loops = mesh_boundary_loops(m.mesh).size();
    const auto& last = disk_run.result.log.back();
    const bool ok = e.mae < kBandMae && sp.points.size() == 10000 && cd < kChamfer && loops >= 1 &&
                    disk_run.seconds < kTrainSeconds;
    report(5, ok,
           fmt("band_mae=%.5f (<%g) chamfer=%.5f (<%g, %zu pts) loops=%zu l_near=%.5f l_far=%.3g train=%.0fs", e.mae,
               kBandMae, cd, kChamfer, sp.points.size(), loops, last.l_near.value_or(NAN), last.l_far.value_or(NAN),
               disk_run.seconds));
  }

  // 1: gradient checks on a fresh and the trained desk field.
  {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(11);
    const NeuralField fresh = NeuralField::initialize(desk.train.arch, desk.seed);
    double worst = 0.0;
    bool counts = true;
    for (const NeuralField* f : {&fresh, &disk_field}) {
      const GradCheckResult in = grad_check(*f, 100, rng);
      const GradCheckResult par = param_grad_check(*f, 50, rng);
      counts = counts && in.accepted == 100 && par.accepted == 50;
      worst = std::max({worst, in.max_rel_err, par.max_rel_err});
    }
    const double s = seconds_since(t0);
    report(1, counts && worst < kGradTol && s < kGradSeconds,
           fmt("max_rel_err=%.3g (<%g) time=%.2fs (<%gs)", worst, kGradTol, s, kGradSeconds));
  }

  // 2: one full pull lands on plane and sphere zero sets.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const AnalyticField fields[] = {AnalyticField::plane(), AnalyticField::plane(Vec3(1, -2, 2).normalized(), 0.2),
                                    AnalyticField::sphere(Vec3::Zero(), 0.6),
                                    AnalyticField::sphere(Vec3(0.1, -0.2, 0.05), 0.45)};
    Rng rng(2);
    double worst = 0.0;
    std::size_t n = 0;
    for (const auto& f : fields) {
      for (int i = 0; i < 20000; ++i) {
        const Vec3 q = rng.uniform_in(BBox{});
        if (f.kink_margin(q) < 1e-6) continue;
        const PullResult p = pull(f, q);
        if (p.degenerate) continue;
        worst = std::max(worst, f.eval(p.point));
        ++n;
      }
    }
    const double s = seconds_since(t0);
    report(2, worst < kPullTol && s < kPullSeconds,
           fmt("max |f(q')|=%.3g (<%g) over %zu points, time=%.2fs (<%gs)", worst, kPullTol, n, s, kPullSeconds));
  }

  // 3: loss_far and chamfer against exhaustive search.
  {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(3);
    const AnalyticField fields[] = {AnalyticField::sphere(Vec3::Zero(), 0.5), AnalyticField::plane(),
                                    AnalyticField::disk(Vec3::Zero(), Vec3::UnitZ(), 0.6)};
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const auto& f = fields[t % 3];
      PointSet q(1 + rng.index(300));
      PointSet mu(1 + rng.index(300));
      for (auto& x : q) x = rng.uniform_in(BBox{});
      for (auto& x : mu) x = rng.uniform_in(BBox{});
      PointSet pulled;
      for (const auto& x : q) {
        const FieldGradient g = f.eval_with_grad(x);
        const double norm = g.grad.norm();
        pulled.push_back(norm < 1e-8 ? x : Vec3(x - g.value * g.grad / norm));
      }
      auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
      worst = std::max(worst, rel(loss_far(f, q, mu).value, testing::brute_chamfer(pulled, mu, true)));
      worst = std::max(worst, rel(chamfer(q, mu, ChamferMode::Squared), testing::brute_chamfer(q, mu, true)));
      worst = std::max(worst, rel(chamfer(q, mu, ChamferMode::Euclidean), testing::brute_chamfer(q, mu, false)));
    }
    const double s = seconds_since(t0);
    report(3, worst < kLossRelTol && s < kLossSeconds,
           fmt("max rel diff=%.3g (<%g) over 50 instances, time=%.2fs (<%gs)", worst, kLossRelTol, s, kLossSeconds));
  }

  // 4: plane sample targets are exact distances.
  {
    const SyntheticScene plane = gen_scene(SceneKind::Plane, 2000, 0.0, 4);
    Rng rng(4);
    std::vector<PlaneSample> samples;
    while (samples.size() < 100000) {
      const std::size_t i = rng.index(plane.cloud.size());
      const Surfel& s = plane.cloud.surfels[i];
      const auto roots = sample_plane_roots(s, 10, rng);
      for (const auto& p : sample_offsets(s, i, roots, desk.train.sampler, rng)) samples.push_back(p);
    }
    samples.resize(100000);
    double worst = 0.0;
    for (const auto& p : samples) worst = std::max(worst, std::abs(p.target - std::abs(p.point.z())));
    const double ln = loss_near(plane.oracle, samples);
    report(4, worst < kTargetTol && ln < kTargetTol,
           fmt("max |t - d|=%.3g loss_near=%.3g (<%g) over %zu samples", worst, ln, kTargetTol, samples.size()));
  }

  // 6: closed sphere.
  {
    const SyntheticScene sphere = gen_scene(SceneKind::Sphere, 2000, 0.0, desk.seed);
    const Trained r = run(sphere, desk.train);
    const Resolution res = Resolution::cubic(kMeshRes);
    const ExtractedMesh m = extract_mesh(r.result.field, BBox{}, res, default_iso_band(BBox{}, res));
    const double cell = 2.0 / (kMeshRes - 1);
    double worst = 0.0;
    for (const auto& v : m.mesh.vertices) worst = std::max(worst, std::abs(v.norm() - SceneOptions{}.radius));
    const bool ok = !m.mesh.triangles.empty() && m.mesh.boundary_edges.empty() && worst < kRadiusCells * cell;
    report(6, ok,
           fmt("triangles=%zu boundary_edges=%zu radius_err=%.4f (<%.4f) train=%.0fs", m.mesh.triangles.size(),
               m.mesh.boundary_edges.size(), worst, kRadiusCells * cell, r.seconds));
  }

  // 7: ablation ordering on the noisy disk.
  {
    const SyntheticScene noisy = gen_scene(SceneKind::Disk, 2000, 0.02, desk.seed);
    TrainConfig far = desk.train;
    far.lambda_near = 0.0;
    far.lambda_proj = 0.0;
    TrainConfig far_near = desk.train;
    far_near.lambda_proj = 0.0;
    const double m_far = band_mae(run(noisy, far).result.field, noisy.oracle);
    const double m_fn = band_mae(run(noisy, far_near).result.field, noisy.oracle);
    const double m_full = band_mae(run(noisy, desk.train).result.field, noisy.oracle);
    const bool ok = m_far > m_fn && m_fn >= m_full && m_far >= kAblationRatio * m_full;
    report(7, ok,
           fmt("mae far=%.5f far+near=%.5f full=%.5f ratio=%.2f (>=%g)", m_far, m_fn, m_full, m_far / m_full,
               kAblationRatio));
  }

  // 8: denoising by projection on the noisy plane.
  {
    const SyntheticScene noisy = gen_scene(SceneKind::Plane, 2000, 0.02, desk.seed);
    const double rms0 = rms_oracle(noisy.cloud, noisy.oracle);
    const double with = rms_oracle(run(noisy, desk.train).result.cloud, noisy.oracle);
    TrainConfig off = desk.train;
    off.lambda_proj = 0.0;
    const double without = rms_oracle(run(noisy, off).result.cloud, noisy.oracle);
    const bool ok = with <= kDenoiseKeep * rms0 && (rms0 - without) / rms0 < kNoProjReduction;
    report(8, ok,
           fmt("rms initial=%.5f with_proj=%.5f (ratio %.3f, <=%g) without=%.5f (reduction %.3f, <%g)", rms0, with,
               with / rms0, kDenoiseKeep, without, (rms0 - without) / rms0, kNoProjReduction));
  }

  // 9: deformation through the trained disk field.
  {
    Rng rng(9);
    PointSet pts(10000);
    for (auto& p : pts) p = rng.uniform_in(BBox{});
    const DeformationTrace tr = deform_cloud(disk_field, pts, 20, 0.5);
    bool monotone = true;
    for (std::size_t k = 1; k < tr.mean_residual.size(); ++k) {
      monotone = monotone && tr.mean_residual[k] <= tr.mean_residual[k - 1] + kDeformSlack;
    }
    const double final_mean = tr.mean_residual.back();
    report(9, final_mean < kDeformMean && monotone,
           fmt("mean residual %.4f -> %.5f (<%g) non_increasing=%s", tr.mean_residual.front(), final_mean, kDeformMean,
               monotone ? "yes" : "no"));
  }

  // 10: every command is byte-repeatable with one thread.
  {
    const std::string base = cli + " ";
    const std::string t1 = " --threads 1 --seed 5 -o ";
    const fs::path s = scratch / "scene";
    const fs::path t = scratch / "train";
    const std::string ckpt = " --checkpoint " + (t / "field.udf").string();
    const std::pair<std::string, fs::path> cmds[] = {
        {base + "synth --kind disk --n 500 --noise 0.01" + t1 + s.string(), s},
        {base + "train --config " + argv[2] + " --iters 300 --cloud " + (s / "cloud.surfels").string() + t1 + t.string(),
         t},
        {base + "extract --res 32" + ckpt + t1 + (scratch / "extract").string(), scratch / "extract"},
        {base + "deform --steps 5 --set deform.points=2000" + ckpt + t1 + (scratch / "deform").string(),
         scratch / "deform"},
        {base + "eval --res 24 --set eval.surface_points=1000 --set eval.mesh_resolution=32 --gt " +
             (s / "gt.xyz").string() + " --oracle " + (s / "oracle.udf").string() + ckpt + t1 +
             (scratch / "eval").string(),
         scratch / "eval"},
        {base + "export-field --res 32" + ckpt + t1 + (scratch / "export").string(), scratch / "export"},
    };
    bool ok = true;
    std::string detail;
    for (const auto& [cmd, out] : cmds) {
      std::string why;
      const bool same = repeatable(cmd, out, why);
      detail += out.filename().string() + (same ? "=same " : "=DIFF(" + why + ") ");
      ok = ok && same;
    }
    report(10, ok, detail);
  }

  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
