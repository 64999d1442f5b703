#include "ifsdf/metrics.hpp"

#include <cmath>
#include <sstream>

#include "ifsdf/errors.hpp"
#include "ifsdf/geom.hpp"

namespace ifsdf::metrics {

namespace {

void require_nonempty(std::span<const Vec3> a, std::span<const Vec3> b, const char* who) {
  if (a.empty() || b.empty()) throw InputError(std::string(who) + ": empty point set");
}

std::vector<double> nn_distances(std::span<const Vec3> from, std::span<const Vec3> to) {
  const geom::KdTree tree(std::vector<Vec3>(to.begin(), to.end()));
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i)
    out[i] = norm(from[i] - to[tree.nearest(from[i])]);
  return out;
}

}  // namespace

double chamfer_one_sided(std::span<const Vec3> a, std::span<const Vec3> b, ChamferOrder order) {
  require_nonempty(a, b, "chamfer");
  const auto d = nn_distances(a, b);
  double sum = 0.0;
  for (double x : d) sum += order == ChamferOrder::kL1 ? x : x * x;
  return sum / a.size();
}

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b, ChamferOrder order) {
  return 0.5 * (chamfer_one_sided(a, b, order) + chamfer_one_sided(b, a, order));
}

double hausdorff_one_sided(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_nonempty(a, b, "hausdorff");
  const auto d = nn_distances(a, b);
  double worst = 0.0;
  for (double x : d) worst = std::max(worst, x);
  return worst;
}

double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b) {
  return std::max(hausdorff_one_sided(a, b), hausdorff_one_sided(b, a));
}

double normal_consistency(std::span<const Vec3> a_pts, std::span<const Vec3> a_normals,
                          std::span<const Vec3> b_pts, std::span<const Vec3> b_normals) {
  require_nonempty(a_pts, b_pts, "normal_consistency");
  if (a_pts.size() != a_normals.size() || b_pts.size() != b_normals.size())
    throw InputError("normal_consistency: points and normals differ in length");
  const auto one_way = [](std::span<const Vec3> pts, std::span<const Vec3> nrm,
                          std::span<const Vec3> opts, std::span<const Vec3> onrm) {
    const geom::KdTree tree(std::vector<Vec3>(opts.begin(), opts.end()));
    double sum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      sum += std::abs(dot(nrm[i], onrm[tree.nearest(pts[i])]));
    return sum / pts.size();
  };
  return 0.5 * (one_way(a_pts, a_normals, b_pts, b_normals) +
                one_way(b_pts, b_normals, a_pts, a_normals));
}

double f_score(std::span<const Vec3> pred, std::span<const Vec3> gt, double threshold) {
  require_nonempty(pred, gt, "f_score");
  if (!(threshold > 0.0)) throw InputError("f_score: threshold must be positive");
  const auto frac_within = [&](std::span<const Vec3> from, std::span<const Vec3> to) {
    const auto d = nn_distances(from, to);
    std::size_t hit = 0;
    for (double x : d) hit += x < threshold ? 1 : 0;
    return static_cast<double>(hit) / from.size();
  };
  const double precision = frac_within(pred, gt);
  const double recall = frac_within(gt, pred);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<int> edge_points(std::span<const Vec3> points, std::span<const Vec3> normals,
                             double epsilon, double sigma) {
  if (points.size() != normals.size())
    throw InputError("edge_points: points and normals differ in length");
  const geom::KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
  std::vector<int> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int j : tree.radius_search(points[i], epsilon)) {
      if (j == static_cast<int>(i)) continue;
      if (std::abs(dot(normals[i], normals[j])) < sigma) {
        out.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  return out;
}

EcdResult edge_chamfer(const mesh::Mesh& pred, const mesh::Mesh& gt, int n_samples,
                       double epsilon, double sigma, std::uint64_t seed) {
  const auto sp = mesh::sample_mesh_surface(pred, n_samples, seed);
  const auto sg = mesh::sample_mesh_surface(gt, n_samples, seed);
  const auto pick = [](const mesh::SurfaceSample& s, const std::vector<int>& idx) {
    std::vector<Vec3> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(s.points[i]);
    return out;
  };
  std::vector<Vec3> ep = pick(sp, edge_points(sp.points, sp.normals, epsilon, sigma));
  std::vector<Vec3> eg = pick(sg, edge_points(sg.points, sg.normals, epsilon, sigma));

  EcdResult r;
  r.pred_edges_empty = ep.empty();
  r.gt_edges_empty = eg.empty();
  // An empty edge set falls back to the full sampling of that surface.
  if (ep.empty()) {
    ep = sp.points;
    r.fallback = true;
  }
  if (eg.empty()) {
    eg = sg.points;
    r.fallback = true;
  }
  r.l1 = chamfer(ep, eg, ChamferOrder::kL1);
  r.l2 = chamfer(ep, eg, ChamferOrder::kL2);
  return r;
}

namespace {

MetricsReport core_report(std::span<const Vec3> pred_pts, std::span<const Vec3> gt_pts,
                          const EvalOptions& opt) {
  MetricsReport r;
  r.pred_samples = static_cast<int>(pred_pts.size());
  r.gt_samples = static_cast<int>(gt_pts.size());
  r.f_score_threshold = opt.fscore_threshold;
  r.ecd_epsilon = opt.ecd_epsilon;
  r.ecd_sigma = opt.ecd_sigma;
  r.one_sided_cd_pred = chamfer_one_sided(pred_pts, gt_pts, ChamferOrder::kL1);
  r.one_sided_cd_gt = chamfer_one_sided(gt_pts, pred_pts, ChamferOrder::kL1);
  r.cd_l1 = 0.5 * (r.one_sided_cd_pred + r.one_sided_cd_gt);
  r.cd_l2 = chamfer(pred_pts, gt_pts, ChamferOrder::kL2);
  r.one_sided_hd_pred = hausdorff_one_sided(pred_pts, gt_pts);
  r.one_sided_hd_gt = hausdorff_one_sided(gt_pts, pred_pts);
  r.hausdorff = std::max(r.one_sided_hd_pred, r.one_sided_hd_gt);
  r.f_score = f_score(pred_pts, gt_pts, opt.fscore_threshold);
  return r;
}

}  // namespace

MetricsReport evaluate(const mesh::Mesh& pred, const mesh::Mesh& gt, const EvalOptions& opt) {
  // Both surfaces use the same sampling stream, so identical meshes score
  // exactly zero distance and unit agreement.
  const auto sp = mesh::sample_mesh_surface(pred, opt.samples, opt.seed + 17);
  const auto sg = mesh::sample_mesh_surface(gt, opt.samples, opt.seed + 17);
  MetricsReport r = core_report(sp.points, sg.points, opt);
  r.normal_consistency = normal_consistency(sp.points, sp.normals, sg.points, sg.normals);
  r.nc_available = true;
  if (opt.with_ecd) {
    const EcdResult e =
        edge_chamfer(pred, gt, opt.samples, opt.ecd_epsilon, opt.ecd_sigma, opt.seed + 19);
    r.ecd_l1 = e.l1;
    r.ecd_l2 = e.l2;
    r.ecd_available = true;
    r.ecd_fallback = e.fallback;
  }
  return r;
}

MetricsReport evaluate(const mesh::Mesh& pred, std::span<const Vec3> gt_points,
                       const EvalOptions& opt) {
  const auto sp = mesh::sample_mesh_surface(pred, opt.samples, opt.seed + 17);
  MetricsReport r = core_report(sp.points, gt_points, opt);
  r.gt_samples = static_cast<int>(gt_points.size());
  r.nc_available = false;   // a bare point cloud carries no normals
  r.ecd_available = false;  // edge detection needs normals on both sides
  return r;
}

std::string to_kv(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(12);
  out << "cd_l1=" << r.cd_l1 << '\n';
  out << "cd_l2=" << r.cd_l2 << '\n';
  out << "one_sided_cd_pred_to_gt=" << r.one_sided_cd_pred << '\n';
  out << "one_sided_cd_gt_to_pred=" << r.one_sided_cd_gt << '\n';
  out << "hausdorff=" << r.hausdorff << '\n';
  out << "one_sided_hd_pred_to_gt=" << r.one_sided_hd_pred << '\n';
  out << "one_sided_hd_gt_to_pred=" << r.one_sided_hd_gt << '\n';
  if (r.nc_available)
    out << "normal_consistency=" << r.normal_consistency << '\n';
  else
    out << "normal_consistency=unavailable\n";
  out << "f_score=" << r.f_score << '\n';
  out << "f_score_threshold=" << r.f_score_threshold << '\n';
  if (r.ecd_available) {
    out << "ecd_l1=" << r.ecd_l1 << '\n';
    out << "ecd_l2=" << r.ecd_l2 << '\n';
    out << "ecd_epsilon=" << r.ecd_epsilon << '\n';
    out << "ecd_sigma=" << r.ecd_sigma << '\n';
    out << "ecd_fallback=" << (r.ecd_fallback ? 1 : 0) << '\n';
  } else {
    out << "ecd_l1=unavailable\n";
    out << "ecd_l2=unavailable\n";
  }
  out << "pred_samples=" << r.pred_samples << '\n';
  out << "gt_samples=" << r.gt_samples << '\n';
  return out.str();
}

std::string csv_header() {
  return "cd_l1,cd_l2,one_sided_cd_pred_to_gt,one_sided_cd_gt_to_pred,hausdorff,"
         "one_sided_hd_pred_to_gt,one_sided_hd_gt_to_pred,normal_consistency,f_score,"
         "f_score_threshold,ecd_l1,ecd_l2,pred_samples,gt_samples";
}

std::string to_csv_row(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(12);
  out << r.cd_l1 << ',' << r.cd_l2 << ',' << r.one_sided_cd_pred << ',' << r.one_sided_cd_gt
      << ',' << r.hausdorff << ',' << r.one_sided_hd_pred << ',' << r.one_sided_hd_gt << ',';
  if (r.nc_available)
    out << r.normal_consistency;
  else
    out << "unavailable";
  out << ',' << r.f_score << ',' << r.f_score_threshold << ',';
  if (r.ecd_available)
    out << r.ecd_l1 << ',' << r.ecd_l2;
  else
    out << "unavailable,unavailable";
  out << ',' << r.pred_samples << ',' << r.gt_samples;
  return out.str();
}

}  // namespace ifsdf::metrics
