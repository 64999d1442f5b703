// Command-line front end: train a field from a point cloud, extract meshes,
// score reconstructions, and run the 2D level-set demo.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ifsdf/errors.hpp"
#include "ifsdf/filter.hpp"
#include "ifsdf/geom.hpp"
#include "ifsdf/kv.hpp"
#include "ifsdf/manifest.hpp"
#include "ifsdf/mesh_io.hpp"
#include "ifsdf/mesher.hpp"
#include "ifsdf/metrics.hpp"
#include "ifsdf/net.hpp"
#include "ifsdf/parallel.hpp"
#include "ifsdf/trainer.hpp"

namespace fs = std::filesystem;
using namespace ifsdf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct TrainSettings {
  filter::FilterConfig fcfg;
  train::TrainConfig tcfg;
  int hidden_width = 64;
  int hidden_layers = 4;

  void finalize() {
    tcfg.hidden.assign(hidden_layers, hidden_width);
    fcfg.validate();
    tcfg.validate();
  }
};

std::string policy_name(filter::SigmaPPolicy p) {
  return p == filter::SigmaPPolicy::kMaxNeighborDistance ? "max" : "diagonal";
}
std::string constraint_name(filter::Constraint c) {
  return c == filter::Constraint::kChamfer ? "cd" : "pull";
}
std::string zero_mode_name(filter::ZeroFilterMode m) {
  return m == filter::ZeroFilterMode::kBilateral ? "bilateral" : "average";
}

void apply_setting(TrainSettings& s, const std::string& key, const std::string& value) {
  auto& f = s.fcfg;
  auto& t = s.tcfg;
  if (key == "sigma_n_deg")
    f.sigma_n_deg = kv::to_double(value, key);
  else if (key == "sigma_p_policy") {
    if (value == "max")
      f.sigma_p_policy = filter::SigmaPPolicy::kMaxNeighborDistance;
    else if (value == "diagonal")
      f.sigma_p_policy = filter::SigmaPPolicy::kPatchDiagonal;
    else
      throw InputError("sigma_p_policy must be 'max' or 'diagonal'");
  } else if (key == "k_filter")
    f.k_filter = static_cast<int>(kv::to_int(value, key));
  else if (key == "alpha1")
    f.alpha1 = kv::to_double(value, key);
  else if (key == "alpha2")
    f.alpha2 = kv::to_double(value, key);
  else if (key == "alpha3")
    f.alpha3 = kv::to_double(value, key);
  else if (key == "constraint") {
    if (value == "cd")
      f.constraint = filter::Constraint::kChamfer;
    else if (value == "pull")
      f.constraint = filter::Constraint::kPull;
    else
      throw InputError("constraint must be 'cd' or 'pull'");
  } else if (key == "bidirectional")
    f.bidirectional = kv::to_bool(value, key);
  else if (key == "include_zero")
    f.include_zero = kv::to_bool(value, key);
  else if (key == "zero_mode") {
    if (value == "bilateral")
      f.zero_mode = filter::ZeroFilterMode::kBilateral;
    else if (value == "average")
      f.zero_mode = filter::ZeroFilterMode::kAverage;
    else
      throw InputError("zero_mode must be 'bilateral' or 'average'");
  } else if (key == "eikonal_weight")
    f.eikonal_weight = kv::to_double(value, key);
  else if (key == "weight_floor")
    f.weight_floor = kv::to_double(value, key);
  else if (key == "per_point")
    f.per_point = static_cast<int>(kv::to_int(value, key));
  else if (key == "sigma_k")
    f.sigma_k = static_cast<int>(kv::to_int(value, key));
  else if (key == "iterations")
    t.iterations = static_cast<int>(kv::to_int(value, key));
  else if (key == "learning_rate")
    t.learning_rate = kv::to_double(value, key);
  else if (key == "batch_queries")
    t.batch_queries = static_cast<int>(kv::to_int(value, key));
  else if (key == "checkpoint_every")
    t.checkpoint_every = static_cast<int>(kv::to_int(value, key));
  else if (key == "seed")
    t.seed = kv::to_u64(value, key);
  else if (key == "hidden_width")
    s.hidden_width = static_cast<int>(kv::to_int(value, key));
  else if (key == "hidden_layers")
    s.hidden_layers = static_cast<int>(kv::to_int(value, key));
  else if (key == "skip_layer")
    t.skip_layer = static_cast<int>(kv::to_int(value, key));
  else if (key == "net_beta")
    t.net_beta = kv::to_double(value, key);
  else if (key == "init_radius")
    t.init_radius = kv::to_double(value, key);
  else if (key == "threads")
    t.threads = static_cast<int>(kv::to_int(value, key));
  else if (key == "deterministic")
    t.deterministic = kv::to_bool(value, key);
  else
    throw InputError("unknown setting: '" + key + "'");
}

void fill_manifest(RunManifest& m, const TrainSettings& s) {
  const auto& f = s.fcfg;
  const auto& t = s.tcfg;
  m.set_f("sigma_n_deg", f.sigma_n_deg);
  m.set("sigma_p_policy", policy_name(f.sigma_p_policy));
  m.set_i("k_filter", f.k_filter);
  m.set_f("alpha1", f.alpha1);
  m.set_f("alpha2", f.alpha2);
  m.set_f("alpha3", f.alpha3);
  m.set("constraint", constraint_name(f.constraint));
  m.set("bidirectional", f.bidirectional ? "1" : "0");
  m.set("include_zero", f.include_zero ? "1" : "0");
  m.set("zero_mode", zero_mode_name(f.zero_mode));
  m.set_f("eikonal_weight", f.eikonal_weight);
  m.set_f("weight_floor", f.weight_floor);
  m.set_i("per_point", f.per_point);
  m.set_i("sigma_k", f.sigma_k);
  m.set_i("iterations", t.iterations);
  m.set_f("learning_rate", t.learning_rate);
  m.set_i("batch_queries", t.batch_queries);
  m.set_i("checkpoint_every", t.checkpoint_every);
  m.set_u("seed", t.seed);
  m.set_i("hidden_width", s.hidden_width);
  m.set_i("hidden_layers", s.hidden_layers);
  m.set_i("skip_layer", t.skip_layer);
  m.set_f("net_beta", t.net_beta);
  m.set_f("init_radius", t.init_radius);
  m.set_i("threads", t.threads);
  m.set("deterministic", t.deterministic ? "1" : "0");
}

// Manifest keys that identify a run rather than configure it.
bool is_meta_key(const std::string& key) {
  static const char* keys[] = {"command", "tool_version", "input",      "input_hash",
                               "output",  "out_dir",      "loss_combo", "iso",
                               "resolution", "grid_lo",   "grid_hi",    "dim",
                               "margin",  "gt",           "gt_hash",    "samples",
                               "fscore_threshold"};
  for (const char* k : keys)
    if (key == k) return true;
  return false;
}

struct CommonTrainCli {
  std::string config, from_manifest;
  std::optional<int> iterations, batch_queries, k_filter, per_point, sigma_k, hidden_width,
      hidden_layers, skip_layer, checkpoint_every, threads;
  std::optional<double> lr, alpha1, alpha2, alpha3, sigma_n, eikonal, net_beta, init_radius;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> constraint, sigma_p_policy, zero_mode;
  std::optional<bool> bidirectional, include_zero;
  bool deterministic = false;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--config", config, "key=value config file");
    cmd->add_option("--from-manifest", from_manifest, "load settings from a run manifest");
    cmd->add_option("--iterations", iterations, "optimizer steps");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--batch-queries", batch_queries, "queries per step");
    cmd->add_option("--k-filter", k_filter, "filter neighborhood size");
    cmd->add_option("--per-point", per_point, "query samples per input point");
    cmd->add_option("--sigma-k", sigma_k, "neighbor rank for the sampling scale");
    cmd->add_option("--sigma-n", sigma_n, "normal-similarity bandwidth in degrees");
    cmd->add_option("--sigma-p-policy", sigma_p_policy, "spatial bandwidth policy: max|diagonal");
    cmd->add_option("--alpha1", alpha1, "level-set filtering weight");
    cmd->add_option("--alpha2", alpha2, "surface distance weight");
    cmd->add_option("--alpha3", alpha3, "gradient-constraint weight");
    cmd->add_option("--constraint", constraint, "gradient constraint: cd|pull");
    cmd->add_option("--zero-mode", zero_mode, "zero-set filter: bilateral|average");
    cmd->add_option("--bidirectional", bidirectional, "project onto both normals");
    cmd->add_option("--include-zero", include_zero, "enable the zero-set filtering term");
    cmd->add_option("--eikonal-weight", eikonal, "opt-in Eikonal ablation weight");
    cmd->add_option("--hidden-width", hidden_width, "units per hidden layer");
    cmd->add_option("--hidden-layers", hidden_layers, "hidden layer count");
    cmd->add_option("--skip-layer", skip_layer, "hidden layer fed the raw input again (-2 auto)");
    cmd->add_option("--net-beta", net_beta, "softplus sharpness");
    cmd->add_option("--init-radius", init_radius, "geometric init sphere radius");
    cmd->add_option("--checkpoint-every", checkpoint_every, "periodic checkpoint interval");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--threads", threads, "worker threads (0 = cores)");
    cmd->add_flag("--deterministic", deterministic, "single-threaded, reproducible runs");
  }

  TrainSettings resolve() const {
    TrainSettings s;
    if (!from_manifest.empty())
      for (const auto& [k, v] : RunManifest::load(from_manifest).entries)
        if (!is_meta_key(k)) apply_setting(s, k, v);
    if (!config.empty())
      for (const auto& [k, v] : kv::read_file(config)) apply_setting(s, k, v);
    if (iterations) s.tcfg.iterations = *iterations;
    if (lr) s.tcfg.learning_rate = *lr;
    if (batch_queries) s.tcfg.batch_queries = *batch_queries;
    if (k_filter) s.fcfg.k_filter = *k_filter;
    if (per_point) s.fcfg.per_point = *per_point;
    if (sigma_k) s.fcfg.sigma_k = *sigma_k;
    if (sigma_n) s.fcfg.sigma_n_deg = *sigma_n;
    if (sigma_p_policy) apply_setting(s, "sigma_p_policy", *sigma_p_policy);
    if (alpha1) s.fcfg.alpha1 = *alpha1;
    if (alpha2) s.fcfg.alpha2 = *alpha2;
    if (alpha3) s.fcfg.alpha3 = *alpha3;
    if (constraint) apply_setting(s, "constraint", *constraint);
    if (zero_mode) apply_setting(s, "zero_mode", *zero_mode);
    if (bidirectional) s.fcfg.bidirectional = *bidirectional;
    if (include_zero) s.fcfg.include_zero = *include_zero;
    if (eikonal) s.fcfg.eikonal_weight = *eikonal;
    if (hidden_width) s.hidden_width = *hidden_width;
    if (hidden_layers) s.hidden_layers = *hidden_layers;
    if (skip_layer) s.tcfg.skip_layer = *skip_layer;
    if (net_beta) s.tcfg.net_beta = *net_beta;
    if (init_radius) s.tcfg.init_radius = *init_radius;
    if (checkpoint_every) s.tcfg.checkpoint_every = *checkpoint_every;
    if (seed) s.tcfg.seed = *seed;
    if (threads) s.tcfg.threads = *threads;
    if (deterministic) s.tcfg.deterministic = true;
    s.finalize();
    return s;
  }
};

int cmd_train(const CommonTrainCli& cli, const std::string& input, const std::string& out_dir) {
  TrainSettings s = cli.resolve();
  const auto raw_points = mesh::read_point_file(input);
  geom::PointCloud raw(raw_points);
  auto [cloud, transform] = geom::normalize(raw);

  fs::create_directories(out_dir);
  s.tcfg.norm = transform;
  s.tcfg.checkpoint_path = (fs::path(out_dir) / "model.ifsdf").string();
  s.tcfg.log_path = (fs::path(out_dir) / "train_log.csv").string();

  RunManifest m;
  m.set("command", "train");
  m.set("tool_version", kToolVersion);
  m.set("input", input);
  m.set("input_hash", file_hash_hex(input));
  fill_manifest(m, s);
  m.write((fs::path(out_dir) / "manifest.txt").string());

  const auto [field, log] = train::train(cloud, s.fcfg, s.tcfg);
  const auto last = log.history.empty() ? filter::FilterTermBreakdown{} : log.history.back();
  std::printf("trained %d iterations; final total=%.6g (dist=%.4g zero=%.4g field=%.4g cd=%.4g)\n",
              static_cast<int>(log.history.size()), last.total, last.l_dist, last.l_zero,
              last.l_field, last.l_cd);
  std::printf("checkpoint: %s\n", s.tcfg.checkpoint_path.c_str());
  return kExitOk;
}

int cmd_reconstruct(const std::string& checkpoint, const std::string& output, double iso,
                    int resolution, double margin, int threads) {
  const net::MlpField field = net::load_checkpoint(checkpoint);
  if (field.input_dim() != 3)
    throw InputError("reconstruct: checkpoint holds a 2D field; use filter2d grids instead");
  mesh::GridSpec grid;
  grid.resolution = resolution;
  grid.lo = {-0.5 - margin, -0.5 - margin, -0.5 - margin};
  grid.hi = {0.5 + margin, 0.5 + margin, 0.5 + margin};
  const int t = threads > 0 ? threads : default_threads();
  mesh::Mesh m = mesh::marching_cubes(field, grid, iso, t);
  if (m.empty())
    std::fprintf(stderr, "warning: iso level %g crosses nothing; writing an empty mesh\n", iso);
  for (Vec3& v : m.vertices) v = field.norm.invert(v);
  mesh::write_mesh(m, output);

  RunManifest man;
  man.set("command", "reconstruct");
  man.set("tool_version", kToolVersion);
  man.set("input", checkpoint);
  man.set("input_hash", file_hash_hex(checkpoint));
  man.set("output", output);
  man.set_f("iso", iso);
  man.set_i("resolution", resolution);
  man.set_f("margin", margin);
  man.write(output + ".manifest");
  std::printf("mesh: %s (%zu vertices, %zu triangles)\n", output.c_str(), m.vertices.size(),
              m.triangles.size());
  return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const metrics::EvalOptions& opt, double cd_l2_scale, const std::string& csv_path) {
  const mesh::Mesh pred = mesh::read_mesh(pred_path);
  if (pred.empty()) throw InputError("eval: prediction mesh is empty: " + pred_path);

  metrics::MetricsReport report;
  std::string ext = pred_path.size() > 4 ? gt_path.substr(gt_path.size() - 4) : "";
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".obj" || ext == ".ply") {
    const mesh::Mesh gt = mesh::read_mesh(gt_path);
    if (!gt.triangles.empty())
      report = metrics::evaluate(pred, gt, opt);
    else
      report = metrics::evaluate(pred, gt.vertices, opt);  // point-only ply
  } else {
    const auto gt_points = mesh::read_point_file(gt_path);
    report = metrics::evaluate(pred, gt_points, opt);
  }

  std::string block = metrics::to_kv(report);
  if (cd_l2_scale != 1.0) {
    const auto tag = std::to_string(static_cast<long long>(cd_l2_scale));
    block += "cd_l2_x" + tag + "=" + kv::format_double(report.cd_l2 * cd_l2_scale) + "\n";
    if (report.ecd_available)
      block += "ecd_l2_x" + tag + "=" + kv::format_double(report.ecd_l2 * cd_l2_scale) + "\n";
  }
  std::fputs(block.c_str(), stdout);

  if (!csv_path.empty()) {
    const bool fresh = !fs::exists(csv_path);
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw InputError("cannot write csv: " + csv_path);
    if (fresh) csv << metrics::csv_header() << '\n';
    csv << metrics::to_csv_row(report) << '\n';

    RunManifest man;
    man.set("command", "eval");
    man.set("tool_version", kToolVersion);
    man.set("input", pred_path);
    man.set("input_hash", file_hash_hex(pred_path));
    man.set("gt", gt_path);
    man.set("gt_hash", file_hash_hex(gt_path));
    man.set_i("samples", opt.samples);
    man.set_f("fscore_threshold", opt.fscore_threshold);
    man.set_u("seed", opt.seed);
    man.write(csv_path + ".manifest");
  }
  return kExitOk;
}

filter::FilterConfig combo_config(filter::FilterConfig base, const std::string& combo) {
  base.include_zero = false;
  base.alpha1 = 0.0;
  base.alpha2 = 0.0;
  base.constraint = filter::Constraint::kChamfer;
  if (combo == "l_pull") {
    base.constraint = filter::Constraint::kPull;
  } else if (combo == "l_cd") {
  } else if (combo == "l_cd+l_zero") {
    base.include_zero = true;
  } else if (combo == "l_cd+l_zero+l_field") {
    base.include_zero = true;
    base.alpha1 = 1.0;
  } else if (combo == "full") {
    base.include_zero = true;
    base.alpha1 = 1.0;
    base.alpha2 = 1.0;
  } else {
    throw InputError(
        "loss_combo must be one of l_pull, l_cd, l_cd+l_zero, l_cd+l_zero+l_field, full");
  }
  return base;
}

int cmd_filter2d(const CommonTrainCli& cli, const std::string& curve_path,
                 const std::string& out_grid, const std::string& combo, int resolution) {
  TrainSettings s = cli.resolve();
  const auto pts = geom::read_xyz(curve_path, 2);
  if (pts.empty()) throw InputError("filter2d: no points in " + curve_path);
  geom::PointCloud raw(pts, 2);
  auto [cloud, transform] = geom::normalize(raw);

  const filter::FilterConfig fcfg = combo_config(s.fcfg, combo);
  train::TrainConfig tcfg = s.tcfg;
  tcfg.norm = transform;
  tcfg.checkpoint_path.clear();
  tcfg.log_path.clear();
  const auto [field, log] = train::train(cloud, fcfg, tcfg);

  // Raster of signed distances over the normalized square, y-major rows.
  std::ofstream out(out_grid);
  if (!out) throw InputError("cannot write grid: " + out_grid);
  const double lo = -0.55, hi = 0.55;
  out << "# signed distance grid (normalized frame)\n";
  out << "# xmin=" << lo << " xmax=" << hi << " ymin=" << lo << " ymax=" << hi
      << " nx=" << resolution + 1 << " ny=" << resolution + 1 << '\n';
  out << "# center=" << transform.center.x << ',' << transform.center.y
      << " scale=" << transform.scale << '\n';
  out.precision(9);
  std::vector<Vec3> row(resolution + 1);
  std::vector<double> vals(resolution + 1);
  for (int iy = 0; iy <= resolution; ++iy) {
    const double y = lo + (hi - lo) * iy / resolution;
    for (int ix = 0; ix <= resolution; ++ix)
      row[ix] = {lo + (hi - lo) * ix / resolution, y, 0.0};
    ad::eval_values(field, row.data(), row.size(), vals.data(), 1);
    for (int ix = 0; ix <= resolution; ++ix) out << vals[ix] << (ix == resolution ? '\n' : ',');
  }
  if (!out) throw InputError("failed writing grid: " + out_grid);

  RunManifest man;
  man.set("command", "filter2d");
  man.set("tool_version", kToolVersion);
  man.set("input", curve_path);
  man.set("input_hash", file_hash_hex(curve_path));
  man.set("output", out_grid);
  man.set("loss_combo", combo);
  man.set_i("resolution", resolution);
  man.set_i("dim", 2);
  fill_manifest(man, s);
  man.write(out_grid + ".manifest");
  std::printf("grid: %s\n", out_grid.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural signed distance fields from raw point clouds via implicit bilateral "
               "filtering of level sets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* tr = app.add_subcommand("train", "Fit a signed distance field to a point cloud");
  std::string tr_input, tr_out;
  CommonTrainCli tr_cli;
  tr->add_option("input", tr_input, "input point cloud (.xyz or .ply)");
  tr->add_option("out_dir", tr_out, "output directory");
  tr_cli.add_options(tr);

  auto* rc = app.add_subcommand("reconstruct", "Extract a triangle mesh from a checkpoint");
  std::string rc_ckpt, rc_out;
  double rc_iso = 0.0, rc_margin = 0.05;
  int rc_res = 256, rc_threads = 0;
  rc->add_option("checkpoint", rc_ckpt, "trained checkpoint (.ifsdf)")->required();
  rc->add_option("output", rc_out, "output mesh (.obj or .ply)")->required();
  rc->add_option("--iso", rc_iso, "iso level to extract (non-zero for open scenes)");
  rc->add_option("--resolution", rc_res, "marching cubes cells per axis");
  rc->add_option("--margin", rc_margin, "grid margin beyond the normalized cube");
  rc->add_option("--threads", rc_threads, "worker threads (0 = cores)");

  auto* ev = app.add_subcommand("eval", "Score a reconstruction against a reference");
  std::string ev_pred, ev_gt, ev_csv;
  metrics::EvalOptions ev_opt;
  double ev_scale = 1.0;
  bool ev_ecd = false;
  ev->add_option("pred", ev_pred, "predicted mesh (.obj or .ply)")->required();
  ev->add_option("gt", ev_gt, "reference mesh or point file")->required();
  ev->add_option("--samples", ev_opt.samples, "surface samples per mesh");
  ev->add_option("--fscore-threshold", ev_opt.fscore_threshold, "F-score distance threshold");
  ev->add_flag("--ecd", ev_ecd, "also compute the edge Chamfer distance");
  ev->add_option("--ecd-epsilon", ev_opt.ecd_epsilon, "edge detection radius");
  ev->add_option("--ecd-sigma", ev_opt.ecd_sigma, "edge detection normal-dot threshold");
  ev->add_option("--seed", ev_opt.seed, "sampling seed");
  ev->add_option("--cd-l2-scale", ev_scale, "extra presentation factor for CD_L2 (100 or 1000)");
  ev->add_option("--csv", ev_csv, "append a CSV row to this file");

  auto* f2 = app.add_subcommand("filter2d", "2D level-set demo: train on a curve, dump the field");
  std::string f2_curve, f2_out, f2_combo = "full";
  int f2_res = 128;
  CommonTrainCli f2_cli;
  f2->add_option("curve", f2_curve, "2D points, one 'x y' or 'x,y' pair per line");
  f2->add_option("out_grid", f2_out, "output CSV raster of signed distances");
  f2->add_option("--loss-combo", f2_combo,
                 "l_pull | l_cd | l_cd+l_zero | l_cd+l_zero+l_field | full");
  f2->add_option("--grid-resolution", f2_res, "raster cells per axis");
  f2_cli.add_options(f2);

  try {
    app.parse(argc, argv);
    if (*tr) {
      if (tr_input.empty() || tr_out.empty())
        throw InputError("train: input and out_dir are required");
      return cmd_train(tr_cli, tr_input, tr_out);
    }
    if (*rc) return cmd_reconstruct(rc_ckpt, rc_out, rc_iso, rc_res, rc_margin, rc_threads);
    if (*ev) {
      ev_opt.with_ecd = ev_ecd;
      return cmd_eval(ev_pred, ev_gt, ev_opt, ev_scale, ev_csv);
    }
    if (*f2) {
      if (f2_curve.empty() || f2_out.empty())
        throw InputError("filter2d: curve and out_grid are required");
      // The 2D demo defaults to a lighter network and schedule.
      if (!f2_cli.hidden_layers) f2_cli.hidden_layers = 3;
      if (!f2_cli.hidden_width) f2_cli.hidden_width = 48;
      if (!f2_cli.iterations) f2_cli.iterations = 2000;
      if (!f2_cli.batch_queries) f2_cli.batch_queries = 512;
      return cmd_filter2d(f2_cli, f2_curve, f2_out, f2_combo, f2_res);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}
