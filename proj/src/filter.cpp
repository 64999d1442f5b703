#include "ifsdf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ifsdf/kv.hpp"
#include "ifsdf/parallel.hpp"

namespace ifsdf::filter {

using ad::BatchEval;
using ad::ParamGrad;
using geom::PointCloud;
using geom::QueryBatch;
using net::MlpField;

namespace {

constexpr double kSigmaPFloor = 1e-8;

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// d(v/|v|) pulled back through a cotangent on the unit vector.
Vec3 unit_chain(const Vec3& g, const Vec3& dn, double grad_floor) {
  const double n = std::max(norm(g), grad_floor);
  const Vec3 u = g / n;
  return (dn - u * dot(u, dn)) / n;
}

double deg2rad(double d) { return d * M_PI / 180.0; }

}  // namespace

void FilterConfig::validate() const {
  if (!(sigma_n_deg > 0.0 && sigma_n_deg < 90.0))
    throw InputError("sigma_n_deg must lie in (0, 90)");
  if (k_filter < 2) throw InputError("k_filter must be at least 2");
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0) || !(alpha3 >= 0.0))
    throw InputError("alpha weights must be nonnegative and finite");
  if (!std::isfinite(alpha1) || !std::isfinite(alpha2) || !std::isfinite(alpha3))
    throw InputError("alpha weights must be nonnegative and finite");
  if (!(weight_floor > 0.0)) throw InputError("weight_floor must be positive");
  if (!(eikonal_weight >= 0.0)) throw InputError("eikonal_weight must be nonnegative");
  if (per_point < 0) throw InputError("per_point must be nonnegative");
  if (sigma_k < 1) throw InputError("sigma_k must be positive");
}

double weight_spatial(const Vec3& p_bar, const Vec3& p_j, double sigma_p) {
  if (!(sigma_p > 0.0)) throw InputError("weight_spatial: sigma_p must be positive");
  return std::exp(-norm2(p_bar - p_j) / (sigma_p * sigma_p));
}

double weight_normal(const Vec3& n_a, const Vec3& n_b, double sigma_n_deg) {
  if (!(sigma_n_deg > 0.0 && sigma_n_deg < 90.0))
    throw InputError("weight_normal: sigma_n_deg must lie in (0, 90)");
  if (std::abs(norm(n_a) - 1.0) > 1e-6 || std::abs(norm(n_b) - 1.0) > 1e-6)
    throw InputError("weight_normal: inputs must be unit length");
  const double kappa = 1.0 - std::cos(deg2rad(sigma_n_deg));
  return std::exp(-(1.0 - dot(n_a, n_b)) / kappa);
}

double bilateral_distance(const FieldPoint& center, std::span<const FieldPoint> neighbors,
                          const FilterConfig& cfg) {
  if (neighbors.empty()) throw InputError("bilateral_distance: empty neighborhood");
  const double gl = cfg.weight_floor;
  if (!(norm(center.sdf.gradient) > gl))
    throw DegenerateGradientError("bilateral_distance: degenerate center gradient");
  for (const FieldPoint& nb : neighbors)
    if (!(norm(nb.sdf.gradient) > gl))
      throw DegenerateGradientError("bilateral_distance: degenerate neighbor gradient");

  double sigma_p;
  if (cfg.sigma_p_policy == SigmaPPolicy::kMaxNeighborDistance) {
    sigma_p = 0.0;
    for (const FieldPoint& nb : neighbors)
      sigma_p = std::max(sigma_p, norm(center.position - nb.position));
  } else {
    Aabb box;
    for (const FieldPoint& nb : neighbors) box.expand(nb.position);
    sigma_p = norm(box.extent());
  }
  sigma_p = std::max(sigma_p, kSigmaPFloor);

  const double kappa = 1.0 - std::cos(deg2rad(cfg.sigma_n_deg));
  const Vec3 nc = normalized(center.sdf.gradient);
  double sw = 0.0, sa = 0.0;
  for (const FieldPoint& nb : neighbors) {
    const Vec3 o = center.position - nb.position;
    const Vec3 nj = normalized(nb.sdf.gradient);
    const double phi = std::exp(-norm2(o) / (sigma_p * sigma_p));
    const double psi = std::exp(-(1.0 - dot(nc, nj)) / kappa);
    const double w = phi * psi;
    double a = std::abs(dot(nj, o));
    if (cfg.bidirectional) a += std::abs(dot(nc, o));
    sw += w;
    sa += w * a;
  }
  return sa / std::max(sw, cfg.weight_floor);
}

Vec3 average_filter_baseline(const Vec3& center, std::span<const Vec3> neighbors,
                             double sigma_p) {
  if (neighbors.empty()) throw InputError("average_filter_baseline: empty neighborhood");
  if (!(sigma_p > 0.0)) throw InputError("average_filter_baseline: sigma_p must be positive");
  double sw = 0.0;
  Vec3 acc{0, 0, 0};
  for (const Vec3& p : neighbors) {
    const double w = std::exp(-norm2(center - p) / (sigma_p * sigma_p));
    sw += w;
    acc += p * w;
  }
  return acc / std::max(sw, 1e-300);
}

// ---------------------------------------------------------------------------
// Batched loss pipeline
// ---------------------------------------------------------------------------

namespace {

struct Pipeline {
  const MlpField& field;
  const QueryBatch& batch;
  const PointCloud& cloud;
  const FilterConfig& cfg;
  int threads;

  std::vector<int> ids;
  int m = 0, n_cloud = 0, k = 0;

  BatchEval ep, eq, eh;
  // Cloud-side state.
  std::vector<double> fp;
  std::vector<Vec3> gp, np;
  std::vector<char> alive_p;
  // Query-side state.
  std::vector<Vec3> qs, qhat;
  std::vector<double> fq, fh;
  std::vector<Vec3> gq, nq, gh, nh;
  std::vector<char> alive_q, alive_h;
  std::vector<int> alive_nbrs;  // usable neighbors per query
  std::vector<double> sp_zero, sp_field;

  bool zero_on = false, field_on = false, eik_on = false;
  int m_zero = 0, m_field = 0, m_alive = 0;

  Pipeline(const MlpField& f, const QueryBatch& b, const PointCloud& c, const FilterConfig& g,
           int th)
      : field(f), batch(b), cloud(c), cfg(g), threads(th) {}

  const int* nbrs(int i) const { return batch.neighbors(ids[i]); }

  void evaluate(const BatchPlan& plan) {
    cfg.validate();
    if (batch.k < 2) throw InputError("filter losses: query batch has no neighbor cache");
    ids = plan.ids;
    if (ids.empty()) {
      ids.resize(batch.size());
      std::iota(ids.begin(), ids.end(), 0);
    }
    m = static_cast<int>(ids.size());
    n_cloud = cloud.count();
    k = batch.k;
    if (m == 0) throw InputError("filter losses: empty query selection");
    for (int id : ids)
      if (id < 0 || id >= batch.size()) throw InputError("filter losses: query id out of range");

    const double gl = cfg.weight_floor;
    zero_on = cfg.include_zero;
    field_on = cfg.alpha1 > 0.0;
    eik_on = cfg.eikonal_weight > 0.0;

    ep.evaluate(field, cloud.points().data(), n_cloud, true, threads);
    fp.resize(n_cloud);
    gp.resize(n_cloud);
    np.resize(n_cloud);
    alive_p.resize(n_cloud);
    for (int j = 0; j < n_cloud; ++j) {
      fp[j] = ep.value(j);
      gp[j] = ep.gradient(j);
      alive_p[j] = norm(gp[j]) > gl;
      np[j] = alive_p[j] ? gp[j] / norm(gp[j]) : Vec3{0, 0, 0};
    }

    qs.resize(m);
    for (int i = 0; i < m; ++i) qs[i] = batch.queries[ids[i]];
    eq.evaluate(field, qs.data(), m, true, threads);
    fq.resize(m);
    gq.resize(m);
    nq.resize(m);
    alive_q.resize(m);
    qhat.resize(m);
    for (int i = 0; i < m; ++i) {
      fq[i] = eq.value(i);
      gq[i] = eq.gradient(i);
      const double gn = norm(gq[i]);
      alive_q[i] = gn > gl;
      nq[i] = alive_q[i] ? gq[i] / gn : Vec3{0, 0, 0};
      qhat[i] = alive_q[i] ? qs[i] - nq[i] * fq[i] : qs[i];
    }

    alive_h.assign(m, 0);
    fh.resize(m);
    gh.assign(m, Vec3{0, 0, 0});
    nh.assign(m, Vec3{0, 0, 0});
    if (zero_on) {
      eh.evaluate(field, qhat.data(), m, true, threads);
      for (int i = 0; i < m; ++i) {
        fh[i] = eh.value(i);
        gh[i] = eh.gradient(i);
        const double gn = norm(gh[i]);
        alive_h[i] = gn > gl;
        nh[i] = alive_h[i] ? gh[i] / gn : Vec3{0, 0, 0};
      }
    }

    alive_nbrs.assign(m, 0);
    for (int i = 0; i < m; ++i) {
      const int* nb = nbrs(i);
      int cnt = 0;
      for (int j = 0; j < k; ++j) cnt += alive_p[nb[j]] ? 1 : 0;
      alive_nbrs[i] = cnt;
    }

    // Detached spatial bandwidths, frozen copies win over fresh values.
    if (!plan.sp_zero.empty()) {
      if (static_cast<int>(plan.sp_zero.size()) != m || static_cast<int>(plan.sp_field.size()) != m)
        throw InputError("filter losses: plan bandwidth arrays do not match the selection");
      sp_zero = plan.sp_zero;
      sp_field = plan.sp_field;
    } else {
      compute_bandwidths();
    }

    m_alive = 0;
    m_zero = 0;
    m_field = 0;
    for (int i = 0; i < m; ++i) {
      if (alive_q[i]) ++m_alive;
      if (contributes_zero(i)) ++m_zero;
      if (contributes_field(i)) ++m_field;
    }
  }

  bool contributes_zero(int i) const {
    if (!zero_on || !alive_q[i] || alive_nbrs[i] == 0) return false;
    return cfg.zero_mode == ZeroFilterMode::kAverage || alive_h[i];
  }
  bool contributes_field(int i) const {
    return field_on && alive_q[i] && alive_nbrs[i] > 0;
  }

  void compute_bandwidths() {
    sp_zero.assign(m, kSigmaPFloor);
    sp_field.assign(m, kSigmaPFloor);
    parallel_for(m, threads, [&](std::size_t b, std::size_t e, int) {
      for (std::size_t i = b; i < e; ++i) {
        const int* nb = nbrs(static_cast<int>(i));
        if (cfg.sigma_p_policy == SigmaPPolicy::kPatchDiagonal) {
          Aabb box;
          for (int j = 0; j < k; ++j) box.expand(cloud.point(nb[j]));
          const double diag = std::max(norm(box.extent()), kSigmaPFloor);
          sp_zero[i] = diag;
          sp_field[i] = diag;
          continue;
        }
        double mz = 0.0, mf = 0.0;
        for (int j = 0; j < k; ++j) {
          const int idx = nb[j];
          if (!alive_p[idx]) continue;
          mz = std::max(mz, norm(qhat[i] - cloud.point(idx)));
          const Vec3 proj = cloud.point(idx) + np[idx] * fq[i];
          mf = std::max(mf, norm(qs[i] - proj));
        }
        sp_zero[i] = std::max(mz, kSigmaPFloor);
        sp_field[i] = std::max(mf, kSigmaPFloor);
      }
    });
  }

  // Per-query bilateral term. When cotangent slots are given, accumulates the
  // scaled adjoints of a unit contribution (caller applies `scale` to all).
  double dbi_term(int i, bool zero_set, double scale, Vec3* d_center, Vec3* d_nc,
                  Vec3* d_np_pair, double* d_level) const {
    const int* nb = nbrs(i);
    const Vec3 center = zero_set ? qhat[i] : qs[i];
    const Vec3 nc = zero_set ? nh[i] : nq[i];
    const double sigma_p = zero_set ? sp_zero[i] : sp_field[i];
    const double inv_s2 = 1.0 / (sigma_p * sigma_p);
    const double kappa = 1.0 - std::cos(deg2rad(cfg.sigma_n_deg));
    const double level = fq[i];

    double sw = 0.0, sa = 0.0;
    double phi[64], psi[64], aa[64], d1[64], d2[64];
    Vec3 off[64];
    for (int j = 0; j < k; ++j) {
      const int idx = nb[j];
      if (!alive_p[idx]) {
        phi[j] = 0.0;
        continue;
      }
      const Vec3 y = zero_set ? cloud.point(idx) : cloud.point(idx) + np[idx] * level;
      const Vec3 o = center - y;
      off[j] = o;
      phi[j] = std::exp(-norm2(o) * inv_s2);
      psi[j] = std::exp(-(1.0 - dot(nc, np[idx])) / kappa);
      d1[j] = dot(np[idx], o);
      d2[j] = cfg.bidirectional ? dot(nc, o) : 0.0;
      aa[j] = std::abs(d1[j]) + std::abs(d2[j]);
      const double w = phi[j] * psi[j];
      sw += w;
      sa += w * aa[j];
    }
    const bool floored = sw <= cfg.weight_floor;
    const double denom = std::max(sw, cfg.weight_floor);
    const double value = sa / denom;
    if (!d_center) return value;

    const double d_sa = scale / denom;
    const double d_sw = floored ? 0.0 : -scale * sa / (denom * denom);
    for (int j = 0; j < k; ++j) {
      const int idx = nb[j];
      if (!alive_p[idx] || phi[j] == 0.0) continue;
      const double w = phi[j] * psi[j];
      const double dw = d_sa * aa[j] + d_sw;
      const double da = d_sa * w;
      const double s1 = sgn(d1[j]);
      const double s2 = cfg.bidirectional ? sgn(d2[j]) : 0.0;
      Vec3 dnj = off[j] * (da * s1);
      Vec3 d_o = np[idx] * (da * s1) + nc * (da * s2);
      *d_nc += off[j] * (da * s2);
      const double dphi = dw * psi[j];
      const double dpsi = dw * phi[j];
      d_o += off[j] * (dphi * phi[j] * -2.0 * inv_s2);
      const double cpsi = dpsi * psi[j] / kappa;
      *d_nc += np[idx] * cpsi;
      dnj += nc * cpsi;
      *d_center += d_o;
      if (!zero_set) {
        // Projected neighbor position carries the level and its own normal.
        const Vec3 dy = -d_o;
        *d_level += dot(np[idx], dy);
        dnj += dy * level;
      }
      d_np_pair[j] += dnj;
    }
    return value;
  }

  double avg_term(int i, double scale, Vec3* d_center) const {
    const int* nb = nbrs(i);
    const double inv_s2 = 1.0 / (sp_zero[i] * sp_zero[i]);
    double sw = 0.0;
    Vec3 acc{0, 0, 0};
    for (int j = 0; j < k; ++j) {
      const int idx = nb[j];
      if (!alive_p[idx]) continue;
      const double w = std::exp(-norm2(qhat[i] - cloud.point(idx)) * inv_s2);
      sw += w;
      acc += cloud.point(idx) * w;
    }
    if (sw <= cfg.weight_floor) return 0.0;
    // The averaged target is held fixed per evaluation (one filter step).
    const Vec3 target = acc / sw;
    const double dist = norm(qhat[i] - target);
    if (d_center && dist > 1e-15) *d_center += (qhat[i] - target) * (scale / dist);
    return dist;
  }
};

std::string first_bad_index(const std::vector<double>& vals) {
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (!std::isfinite(vals[i])) return " (query index " + std::to_string(i) + ")";
  return "";
}

FilterTermBreakdown run_pipeline(const MlpField& field, const QueryBatch& batch,
                                 const PointCloud& cloud, const FilterConfig& cfg,
                                 const BatchPlan& plan, ParamGrad* grad_out, int threads,
                                 DegenerateStats* stats) {
  if (cfg.k_filter > 64 || batch.k > 64)
    throw InputError("filter losses: k_filter above the supported maximum of 64");
  Pipeline pl(field, batch, cloud, cfg, threads);
  pl.evaluate(plan);
  const int m = pl.m, n = pl.n_cloud, k = pl.k;
  const bool grad = grad_out != nullptr;
  const double gl = cfg.weight_floor;

  if (stats) {
    stats->queries = m;
    stats->degenerate_pull = m - pl.m_alive;
    stats->degenerate_center = 0;
    if (pl.zero_on && cfg.zero_mode == ZeroFilterMode::kBilateral)
      for (int i = 0; i < m; ++i)
        if (pl.alive_q[i] && !pl.alive_h[i]) ++stats->degenerate_center;
  }
  if (pl.m_alive == 0)
    throw DegenerateGradientError(
        "filter losses: every query has a vanishing gradient (field collapse)");

  const double w_zero = pl.m_zero > 0 ? 1.0 / pl.m_zero : 0.0;
  const double w_field = pl.m_field > 0 ? cfg.alpha1 / pl.m_field : 0.0;

  // Cotangent slots.
  std::vector<double> dfP, dfQ;
  std::vector<Vec3> dQhat, dNh, dNq, dGq_direct, dNp, dGp, pair_np;
  if (grad) {
    dfP.assign(n, 0.0);
    dfQ.assign(m, 0.0);
    dQhat.assign(m, Vec3{});
    dNh.assign(m, Vec3{});
    dNq.assign(m, Vec3{});
    dGq_direct.assign(m, Vec3{});
    dNp.assign(n, Vec3{});
    dGp.assign(n, Vec3{});
    pair_np.assign(static_cast<std::size_t>(m) * k, Vec3{});
  }

  // Per-query filtering terms.
  std::vector<double> zero_vals(m, 0.0), field_vals(m, 0.0);
  parallel_for(m, threads, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      const int qi = static_cast<int>(i);
      Vec3* pair = grad ? pair_np.data() + i * k : nullptr;
      if (pl.contributes_zero(qi)) {
        if (cfg.zero_mode == ZeroFilterMode::kBilateral) {
          double dummy_level = 0.0;
          zero_vals[i] = pl.dbi_term(qi, true, w_zero, grad ? &dQhat[i] : nullptr,
                                     grad ? &dNh[i] : nullptr, pair, &dummy_level);
        } else {
          zero_vals[i] = pl.avg_term(qi, w_zero, grad ? &dQhat[i] : nullptr);
        }
      }
      if (pl.contributes_field(qi)) {
        Vec3 dcenter{};  // the in-place center is the raw query; no adjoint
        field_vals[i] = pl.dbi_term(qi, false, w_field, grad ? &dcenter : nullptr,
                                    grad ? &dNq[i] : nullptr, pair, grad ? &dfQ[i] : nullptr);
      }
    }
  });

  FilterTermBreakdown out;
  for (int i = 0; i < m; ++i) {
    out.l_zero += zero_vals[i];
    out.l_field += field_vals[i];
  }
  if (pl.m_zero > 0) out.l_zero /= pl.m_zero;
  if (pl.m_field > 0) out.l_field /= pl.m_field;

  // Surface distance term over the whole cloud.
  for (int j = 0; j < n; ++j) out.l_dist += std::abs(pl.fp[j]);
  out.l_dist /= n;
  if (grad && cfg.alpha2 > 0.0)
    for (int j = 0; j < n; ++j) dfP[j] += cfg.alpha2 / n * sgn(pl.fp[j]);

  // Gradient constraint.
  const double w_cd = cfg.alpha3;
  if (cfg.constraint == Constraint::kChamfer) {
    std::vector<Vec3> alive_pts;
    std::vector<int> alive_ids;
    alive_pts.reserve(pl.m_alive);
    for (int i = 0; i < m; ++i)
      if (pl.alive_q[i]) {
        alive_pts.push_back(pl.qhat[i]);
        alive_ids.push_back(i);
      }
    // Query side against the cloud index.
    std::vector<int> nn_c(alive_pts.size());
    parallel_for(alive_pts.size(), threads, [&](std::size_t b, std::size_t e, int) {
      for (std::size_t i = b; i < e; ++i) nn_c[i] = cloud.index().nearest(alive_pts[i]);
    });
    double sum_q = 0.0;
    for (std::size_t i = 0; i < alive_pts.size(); ++i) {
      const Vec3 diff = alive_pts[i] - cloud.point(nn_c[i]);
      const double d = norm(diff);
      sum_q += d;
      if (grad && d > 1e-15)
        dQhat[alive_ids[i]] += diff * (w_cd * 0.5 / (pl.m_alive * d));
    }
    // Cloud side against the moved queries.
    geom::KdTree qtree(alive_pts);
    std::vector<int> nn_q(n);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e, int) {
      for (std::size_t j = b; j < e; ++j) nn_q[j] = qtree.nearest(cloud.point(j));
    });
    double sum_p = 0.0;
    for (int j = 0; j < n; ++j) {
      const Vec3 diff = alive_pts[nn_q[j]] - cloud.point(j);
      const double d = norm(diff);
      sum_p += d;
      if (grad && d > 1e-15) dQhat[alive_ids[nn_q[j]]] += diff * (w_cd * 0.5 / (n * d));
    }
    out.l_cd = 0.5 * (sum_q / pl.m_alive + sum_p / n);
  } else {
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      if (!pl.alive_q[i]) continue;
      const Vec3 diff = pl.qhat[i] - cloud.point(batch.nn_index[pl.ids[i]]);
      const double d = norm(diff);
      sum += d;
      if (grad && d > 1e-15) dQhat[i] += diff * (w_cd / (pl.m_alive * d));
    }
    out.l_pull = sum / pl.m_alive;
  }

  // Optional Eikonal ablation term at the raw queries.
  if (pl.eik_on) {
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      const double gn = norm(pl.gq[i]);
      sum += (gn - 1.0) * (gn - 1.0);
      if (grad && gn > gl)
        dGq_direct[i] += pl.gq[i] * (cfg.eikonal_weight * 2.0 / m * (gn - 1.0) / gn);
    }
    out.l_eikonal = sum / m;
  }

  out.total = (pl.zero_on ? out.l_zero : 0.0) + cfg.alpha1 * out.l_field +
              cfg.alpha2 * out.l_dist +
              cfg.alpha3 * (cfg.constraint == Constraint::kChamfer ? out.l_cd : out.l_pull) +
              cfg.eikonal_weight * out.l_eikonal;

  const struct {
    const char* name;
    double v;
    const std::vector<double>* per_query;
  } checks[] = {{"l_dist", out.l_dist, nullptr},   {"l_zero", out.l_zero, &zero_vals},
                {"l_field", out.l_field, &field_vals}, {"l_cd", out.l_cd, nullptr},
                {"l_pull", out.l_pull, nullptr},    {"l_eikonal", out.l_eikonal, nullptr}};
  for (const auto& c : checks)
    if (!std::isfinite(c.v))
      throw TrainingError(std::string("total_loss: term ") + c.name + " is non-finite" +
                          (c.per_query ? first_bad_index(*c.per_query) : ""));

  if (!grad) return out;

  // Gather neighbor-normal adjoints per cloud point in fixed order.
  for (int i = 0; i < m; ++i) {
    const int* nb = pl.nbrs(i);
    for (int j = 0; j < k; ++j) {
      const Vec3& c = pair_np[static_cast<std::size_t>(i) * k + j];
      if (c.x != 0.0 || c.y != 0.0 || c.z != 0.0) dNp[nb[j]] += c;
    }
  }

  // Moving-center chain: d qhat picks up the curvature of the field at qhat.
  std::vector<Vec3> dGh;
  if (pl.zero_on && cfg.zero_mode == ZeroFilterMode::kBilateral) {
    dGh.assign(m, Vec3{});
    parallel_for(m, threads, [&](std::size_t b, std::size_t e, int) {
      for (std::size_t i = b; i < e; ++i)
        if (pl.contributes_zero(static_cast<int>(i)))
          dGh[i] = unit_chain(pl.gh[i], dNh[i], gl);
    });
    std::vector<Vec3> hv(m);
    pl.eh.hessian_vec(dGh.data(), hv.data());
    for (int i = 0; i < m; ++i)
      if (pl.contributes_zero(i)) dQhat[i] += hv[i];
  }

  // Pull chain into the raw-query cotangents, then the unit-normal chains.
  std::vector<Vec3> dGq(m);
  parallel_for(m, threads, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      if (pl.alive_q[i]) {
        dfQ[i] += -dot(pl.nq[i], dQhat[i]);
        dNq[i] += dQhat[i] * -pl.fq[i];
        dGq[i] = unit_chain(pl.gq[i], dNq[i], gl) + dGq_direct[i];
      } else {
        dGq[i] = dGq_direct[i];
        dfQ[i] = 0.0;
      }
    }
  });
  parallel_for(n, threads, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t j = b; j < e; ++j)
      if (pl.alive_p[j]) dGp[j] = unit_chain(pl.gp[j], dNp[j], gl);
  });

  pl.ep.param_backprop(dfP.data(), dGp.data(), *grad_out);
  pl.eq.param_backprop(dfQ.data(), dGq.data(), *grad_out);
  if (!dGh.empty()) pl.eh.param_backprop(nullptr, dGh.data(), *grad_out);
  return out;
}

}  // namespace

BatchPlan make_plan(const MlpField& field, const QueryBatch& batch, const PointCloud& cloud,
                    const FilterConfig& cfg, std::vector<int> ids, int threads) {
  Pipeline pl(field, batch, cloud, cfg, threads);
  BatchPlan seed;
  seed.ids = std::move(ids);
  pl.evaluate(seed);
  BatchPlan plan;
  plan.ids = pl.ids;
  plan.sp_zero = pl.sp_zero;
  plan.sp_field = pl.sp_field;
  return plan;
}

FilterTermBreakdown eval_loss(const MlpField& field, const QueryBatch& batch,
                              const PointCloud& cloud, const FilterConfig& cfg,
                              const BatchPlan& plan, int threads, DegenerateStats* stats) {
  return run_pipeline(field, batch, cloud, cfg, plan, nullptr, threads, stats);
}

FilterTermBreakdown eval_loss_grad(const MlpField& field, const QueryBatch& batch,
                                   const PointCloud& cloud, const FilterConfig& cfg,
                                   const BatchPlan& plan, ParamGrad& grad_out, int threads,
                                   DegenerateStats* stats) {
  if (grad_out.size() != field.n_params())
    grad_out = ParamGrad(field.n_params());
  else
    grad_out.zero();
  return run_pipeline(field, batch, cloud, cfg, plan, &grad_out, threads, stats);
}

FilterTermBreakdown total_loss(const MlpField& field, const QueryBatch& batch,
                               const PointCloud& cloud, const FilterConfig& cfg, int threads) {
  return eval_loss(field, batch, cloud, cfg, BatchPlan{}, threads);
}

double loss_dist(const MlpField& field, const PointCloud& cloud, int threads) {
  const int n = cloud.count();
  if (n == 0) throw InputError("loss_dist: empty cloud");
  std::vector<double> vals(n);
  ad::eval_values(field, cloud.points().data(), n, vals.data(), threads);
  double sum = 0.0;
  for (double v : vals) sum += std::abs(v);
  return sum / n;
}

double loss_zero(const MlpField& field, const QueryBatch& batch, const PointCloud& cloud,
                 const FilterConfig& cfg, int threads) {
  return total_loss(field, batch, cloud, isolate_zero(cfg), threads).l_zero;
}

double loss_field(const MlpField& field, const QueryBatch& batch, const PointCloud& cloud,
                  const FilterConfig& cfg, int threads) {
  return total_loss(field, batch, cloud, isolate_field(cfg), threads).l_field;
}

double loss_cd(const MlpField& field, const QueryBatch& batch, const PointCloud& cloud,
               int threads) {
  FilterConfig cfg;
  return total_loss(field, batch, cloud, isolate_cd(cfg), threads).l_cd;
}

double loss_pull(const MlpField& field, const QueryBatch& batch, const PointCloud& cloud,
                 int threads) {
  FilterConfig cfg;
  return total_loss(field, batch, cloud, isolate_pull(cfg), threads).l_pull;
}

FilterConfig isolate_zero(FilterConfig cfg) {
  cfg.alpha1 = cfg.alpha2 = cfg.alpha3 = 0.0;
  cfg.include_zero = true;
  cfg.eikonal_weight = 0.0;
  return cfg;
}
FilterConfig isolate_field(FilterConfig cfg) {
  cfg.alpha1 = 1.0;
  cfg.alpha2 = cfg.alpha3 = 0.0;
  cfg.include_zero = false;
  cfg.eikonal_weight = 0.0;
  return cfg;
}
FilterConfig isolate_dist(FilterConfig cfg) {
  cfg.alpha1 = cfg.alpha3 = 0.0;
  cfg.alpha2 = 1.0;
  cfg.include_zero = false;
  cfg.eikonal_weight = 0.0;
  return cfg;
}
FilterConfig isolate_cd(FilterConfig cfg) {
  cfg.alpha1 = cfg.alpha2 = 0.0;
  cfg.alpha3 = 1.0;
  cfg.constraint = Constraint::kChamfer;
  cfg.include_zero = false;
  cfg.eikonal_weight = 0.0;
  return cfg;
}
FilterConfig isolate_pull(FilterConfig cfg) {
  cfg.alpha1 = cfg.alpha2 = 0.0;
  cfg.alpha3 = 1.0;
  cfg.constraint = Constraint::kPull;
  cfg.include_zero = false;
  cfg.eikonal_weight = 0.0;
  return cfg;
}

ParsedFilterConfig parse_filter_config(const std::string& path) {
  ParsedFilterConfig out;
  const kv::Map map = kv::read_file(path);
  for (const auto& [key, value] : map) {
    if (key == "sigma_n_deg") {
      out.cfg.sigma_n_deg = kv::to_double(value, key);
    } else if (key == "sigma_p_policy") {
      if (value == "max")
        out.cfg.sigma_p_policy = SigmaPPolicy::kMaxNeighborDistance;
      else if (value == "diagonal")
        out.cfg.sigma_p_policy = SigmaPPolicy::kPatchDiagonal;
      else
        throw InputError("sigma_p_policy must be 'max' or 'diagonal', got '" + value + "'");
    } else if (key == "k_filter") {
      out.cfg.k_filter = static_cast<int>(kv::to_int(value, key));
    } else if (key == "alpha1") {
      out.cfg.alpha1 = kv::to_double(value, key);
    } else if (key == "alpha2") {
      out.cfg.alpha2 = kv::to_double(value, key);
    } else if (key == "alpha3") {
      out.cfg.alpha3 = kv::to_double(value, key);
    } else if (key == "constraint") {
      if (value == "cd")
        out.cfg.constraint = Constraint::kChamfer;
      else if (value == "pull")
        out.cfg.constraint = Constraint::kPull;
      else
        throw InputError("constraint must be 'cd' or 'pull', got '" + value + "'");
    } else if (key == "bidirectional") {
      out.cfg.bidirectional = kv::to_bool(value, key);
    } else if (key == "include_zero") {
      out.cfg.include_zero = kv::to_bool(value, key);
    } else if (key == "zero_mode") {
      if (value == "bilateral")
        out.cfg.zero_mode = ZeroFilterMode::kBilateral;
      else if (value == "average")
        out.cfg.zero_mode = ZeroFilterMode::kAverage;
      else
        throw InputError("zero_mode must be 'bilateral' or 'average', got '" + value + "'");
    } else if (key == "eikonal_weight") {
      out.cfg.eikonal_weight = kv::to_double(value, key);
    } else if (key == "weight_floor") {
      out.cfg.weight_floor = kv::to_double(value, key);
    } else if (key == "per_point") {
      out.cfg.per_point = static_cast<int>(kv::to_int(value, key));
    } else if (key == "sigma_k") {
      out.cfg.sigma_k = static_cast<int>(kv::to_int(value, key));
    } else if (key == "seed") {
      out.seed = kv::to_u64(value, key);
      out.has_seed = true;
    } else {
      throw InputError("unknown config key: '" + key + "'");
    }
  }
  out.cfg.validate();
  return out;
}

}  // namespace ifsdf::filter
