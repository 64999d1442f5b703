#include "ifsdf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ifsdf/errors.hpp"
#include "ifsdf/parallel.hpp"

namespace ifsdf::ad {

using net::MlpField;
using net::softplus;
using net::softplus_d1;

namespace {
// Points are processed in fixed panels of BLK lanes; inner loops run over the
// lane index so the compiler can vectorize them.
constexpr int BLK = 32;
}  // namespace

bool ParamGrad::finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Scalar tape (reference path, one point at a time)
// ---------------------------------------------------------------------------

Tape Tape::record(const MlpField& field, const Vec3& x) {
  Tape t;
  t.x_ = x;
  const int d = field.input_dim();
  const int L = static_cast<int>(field.hidden().size());
  t.a_.resize(L);
  t.sig_.resize(L);
  t.r_.resize(L);
  const double* prev = &x.x;
  for (int l = 0; l < L; ++l) {
    const auto& s = field.shape(l);
    const int acts = field.act_cols(l);
    t.a_[l].resize(s.rows);
    t.sig_[l].resize(s.rows);
    const double* W = field.w(l);
    const double* B = field.b(l);
    for (int o = 0; o < s.rows; ++o) {
      double z = B[o];
      const double* row = W + static_cast<std::size_t>(o) * s.cols;
      for (int i = 0; i < acts; ++i) z += row[i] * prev[i];
      if (l == field.skip_layer())
        for (int i = 0; i < d; ++i) z += row[acts + i] * (&x.x)[i];
      t.sig_[l][o] = softplus_d1(z, field.beta());
      t.a_[l][o] = softplus(z, field.beta());
    }
    prev = t.a_[l].data();
  }
  const int last = field.hidden().back();
  double y = field.b(L)[0];
  for (int i = 0; i < last; ++i) y += field.w(L)[i] * prev[i];
  t.f_ = y;

  // Reverse sweep: r_l = dy/da_l, g = dy/dx.
  t.r_[L - 1].assign(field.w(L), field.w(L) + last);
  for (int l = L - 1; l >= 0; --l) {
    const auto& s = field.shape(l);
    const int acts = field.act_cols(l);
    const double* W = field.w(l);
    if (l > 0) t.r_[l - 1].assign(acts, 0.0);
    for (int o = 0; o < s.rows; ++o) {
      const double tv = t.sig_[l][o] * t.r_[l][o];
      const double* row = W + static_cast<std::size_t>(o) * s.cols;
      if (l > 0)
        for (int i = 0; i < acts; ++i) t.r_[l - 1][i] += row[i] * tv;
      else
        for (int i = 0; i < acts; ++i) (&t.g_.x)[i] += row[i] * tv;
      if (l == field.skip_layer())
        for (int i = 0; i < d; ++i) (&t.g_.x)[i] += row[acts + i] * tv;
    }
  }
  return t;
}

double Tape::replay(const MlpField& field) const {
  // Deterministic recomputation from the stored input.
  return Tape::record(field, x_).f_;
}

void Tape::backprop(const MlpField& field, double df, const Vec3& dg, ParamGrad& out) const {
  const int d = field.input_dim();
  const int L = static_cast<int>(field.hidden().size());
  const double beta = field.beta();
  const bool has_dg = dg.x != 0.0 || dg.y != 0.0 || dg.z != 0.0;

  std::vector<std::vector<double>> c(L);
  for (int l = 0; l < L; ++l) c[l].assign(field.hidden()[l], 0.0);

  // Reverse over the gradient computation (ascending layers). Ar carries the
  // adjoint of r_{l-1}; it starts as the gradient cotangent dg.
  std::vector<double> Ar(&dg.x, &dg.x + d), Ar_next;
  if (has_dg) {
    for (int l = 0; l < L; ++l) {
      const auto& s = field.shape(l);
      const int acts = field.act_cols(l);
      const double* W = field.w(l);
      double* GW = out.v.data() + s.w_off;
      Ar_next.assign(s.rows, 0.0);
      for (int o = 0; o < s.rows; ++o) {
        const double* row = W + static_cast<std::size_t>(o) * s.cols;
        double e = 0.0;
        for (int i = 0; i < acts; ++i) e += row[i] * Ar[i];
        if (l == field.skip_layer())
          for (int i = 0; i < d; ++i) e += row[acts + i] * (&dg.x)[i];
        const double tv = sig_[l][o] * r_[l][o];
        double* grow = GW + static_cast<std::size_t>(o) * s.cols;
        for (int i = 0; i < acts; ++i) grow[i] += tv * Ar[i];
        if (l == field.skip_layer())
          for (int i = 0; i < d; ++i) grow[acts + i] += tv * (&dg.x)[i];
        const double sp2 = beta * sig_[l][o] * (1.0 - sig_[l][o]);
        c[l][o] = sp2 * r_[l][o] * e;
        Ar_next[o] = sig_[l][o] * e;
      }
      Ar.swap(Ar_next);
    }
    const auto& so = field.shape(L);
    double* GWo = out.v.data() + so.w_off;
    for (int i = 0; i < so.cols; ++i) GWo[i] += Ar[i];
  }

  // Reverse over the plain forward pass (descending layers).
  const auto& so = field.shape(L);
  const int last = so.cols;
  std::vector<double> Aa(last), Aa_next;
  for (int i = 0; i < last; ++i) Aa[i] = df * field.w(L)[i];
  if (df != 0.0) {
    double* GWo = out.v.data() + so.w_off;
    for (int i = 0; i < last; ++i) GWo[i] += df * a_[L - 1][i];
    out.v[so.b_off] += df;
  }
  for (int l = L - 1; l >= 0; --l) {
    const auto& s = field.shape(l);
    const int acts = field.act_cols(l);
    const double* W = field.w(l);
    double* GW = out.v.data() + s.w_off;
    double* Gb = out.v.data() + s.b_off;
    const double* u = l == 0 ? &x_.x : a_[l - 1].data();
    if (l > 0) Aa_next.assign(acts, 0.0);
    for (int o = 0; o < s.rows; ++o) {
      const double co = c[l][o] + sig_[l][o] * Aa[o];
      if (co == 0.0) continue;
      double* grow = GW + static_cast<std::size_t>(o) * s.cols;
      for (int i = 0; i < acts; ++i) grow[i] += co * u[i];
      if (l == field.skip_layer())
        for (int i = 0; i < d; ++i) grow[acts + i] += co * (&x_.x)[i];
      Gb[o] += co;
      if (l > 0) {
        const double* row = W + static_cast<std::size_t>(o) * s.cols;
        for (int i = 0; i < acts; ++i) Aa_next[i] += row[i] * co;
      }
    }
    if (l > 0) Aa.swap(Aa_next);
  }
}

Vec3 Tape::hessian_vec(const MlpField& field, const Vec3& v) const {
  const int d = field.input_dim();
  const int L = static_cast<int>(field.hidden().size());
  const double beta = field.beta();

  // Forward duals: zdot per layer.
  std::vector<std::vector<double>> zd(L);
  std::vector<double> ad(&v.x, &v.x + d), ad_next;
  for (int l = 0; l < L; ++l) {
    const auto& s = field.shape(l);
    const int acts = field.act_cols(l);
    const double* W = field.w(l);
    zd[l].assign(s.rows, 0.0);
    for (int o = 0; o < s.rows; ++o) {
      const double* row = W + static_cast<std::size_t>(o) * s.cols;
      double z = 0.0;
      for (int i = 0; i < acts; ++i) z += row[i] * ad[i];
      if (l == field.skip_layer())
        for (int i = 0; i < d; ++i) z += row[acts + i] * (&v.x)[i];
      zd[l][o] = z;
    }
    ad_next.resize(s.rows);
    for (int o = 0; o < s.rows; ++o) ad_next[o] = sig_[l][o] * zd[l][o];
    ad.swap(ad_next);
  }

  // Reverse duals: rdot_{L-1} = 0 because r_{L-1} is the constant output row.
  Vec3 hv{0, 0, 0};
  std::vector<double> rd(field.hidden().back(), 0.0), rd_next, td;
  for (int l = L - 1; l >= 0; --l) {
    const auto& s = field.shape(l);
    const int acts = field.act_cols(l);
    const double* W = field.w(l);
    td.resize(s.rows);
    for (int o = 0; o < s.rows; ++o) {
      const double sp2 = beta * sig_[l][o] * (1.0 - sig_[l][o]);
      td[o] = sp2 * zd[l][o] * r_[l][o] + sig_[l][o] * rd[o];
    }
    if (l > 0) rd_next.assign(acts, 0.0);
    for (int o = 0; o < s.rows; ++o) {
      const double* row = W + static_cast<std::size_t>(o) * s.cols;
      if (l > 0)
        for (int i = 0; i < acts; ++i) rd_next[i] += row[i] * td[o];
      else
        for (int i = 0; i < acts; ++i) (&hv.x)[i] += row[i] * td[o];
      if (l == field.skip_layer())
        for (int i = 0; i < d; ++i) (&hv.x)[i] += row[acts + i] * td[o];
    }
    if (l > 0) rd.swap(rd_next);
  }
  return hv;
}

ParamGrad grad_params_of_value(const MlpField& field, const Vec3& q) {
  if (!is_finite(q)) throw InputError("grad_params_of_value: non-finite query");
  ParamGrad g(field.n_params());
  Tape::record(field, q).backprop(field, 1.0, {0, 0, 0}, g);
  return g;
}

ParamGrad grad_params_of_input_gradient(const MlpField& field, const Vec3& q,
                                        const Vec3& cotangent) {
  if (!is_finite(q) || !is_finite(cotangent))
    throw InputError("grad_params_of_input_gradient: non-finite input");
  ParamGrad g(field.n_params());
  Tape::record(field, q).backprop(field, 0.0, cotangent, g);
  return g;
}

Vec3 hessian_vec(const MlpField& field, const Vec3& q, const Vec3& v) {
  return Tape::record(field, q).hessian_vec(field, v);
}

// ---------------------------------------------------------------------------
// Panel engine
// ---------------------------------------------------------------------------

namespace {

struct PanelDims {
  int d = 0, L = 0, sum_h = 0, max_h = 0;
  std::vector<int> off;  // feature offset of each hidden layer
};

PanelDims dims_of(const MlpField& f) {
  PanelDims pd;
  pd.d = f.input_dim();
  pd.L = static_cast<int>(f.hidden().size());
  pd.off.resize(pd.L);
  for (int l = 0; l < pd.L; ++l) {
    pd.off[l] = pd.sum_h;
    pd.sum_h += f.hidden()[l];
    pd.max_h = std::max(pd.max_h, f.hidden()[l]);
  }
  return pd;
}

// z[o*BLK+p] = b[o] + sum_i W[o*cols+i] in[i*BLK+p] (+ skip block on x)
void panel_affine(const double* __restrict W, const double* __restrict B, int rows, int cols,
                  int acts, const double* __restrict in, const double* __restrict x, int d,
                  bool skip, double* __restrict z) {
  for (int o = 0; o < rows; ++o) {
    const double* row = W + static_cast<std::size_t>(o) * cols;
    double* zo = z + static_cast<std::size_t>(o) * BLK;
    const double bo = B[o];
    for (int p = 0; p < BLK; ++p) zo[p] = bo;
    for (int i = 0; i < acts; ++i) {
      const double w = row[i];
      const double* ip = in + static_cast<std::size_t>(i) * BLK;
      for (int p = 0; p < BLK; ++p) zo[p] += w * ip[p];
    }
    if (skip)
      for (int i = 0; i < d; ++i) {
        const double w = row[acts + i];
        const double* xp = x + static_cast<std::size_t>(i) * BLK;
        for (int p = 0; p < BLK; ++p) zo[p] += w * xp[p];
      }
  }
}

// out[i*BLK+p] (+)= sum_o W[o*cols + base + i] t[o*BLK+p], i < n_out
void panel_affine_t(const double* __restrict W, int rows, int cols, int base, int n_out,
                    const double* __restrict t, double* __restrict out, bool accumulate) {
  if (!accumulate) std::memset(out, 0, static_cast<std::size_t>(n_out) * BLK * sizeof(double));
  for (int o = 0; o < rows; ++o) {
    const double* row = W + static_cast<std::size_t>(o) * cols + base;
    const double* to = t + static_cast<std::size_t>(o) * BLK;
    for (int i = 0; i < n_out; ++i) {
      const double w = row[i];
      double* op = out + static_cast<std::size_t>(i) * BLK;
      for (int p = 0; p < BLK; ++p) op[p] += w * to[p];
    }
  }
}

// GW[o*cols + base + i] += sum_p A[o*BLK+p] U[i*BLK+p]
void panel_outer(const double* __restrict A, const double* __restrict U, int rows, int cols,
                 int base, int n_in, double* __restrict GW) {
  for (int o = 0; o < rows; ++o) {
    const double* ao = A + static_cast<std::size_t>(o) * BLK;
    double* grow = GW + static_cast<std::size_t>(o) * cols + base;
    for (int i = 0; i < n_in; ++i) {
      const double* up = U + static_cast<std::size_t>(i) * BLK;
      double acc = 0.0;
      for (int p = 0; p < BLK; ++p) acc += ao[p] * up[p];
      grow[i] += acc;
    }
  }
}

}  // namespace

Vec3 BatchEval::gradient(int i) const {
  const int panel = i / BLK, lane = i % BLK;
  const int d = field_->input_dim();
  const double* g = gs_.data() + (static_cast<std::size_t>(panel) * d) * BLK;
  Vec3 out{0, 0, 0};
  for (int a = 0; a < d; ++a) (&out.x)[a] = g[static_cast<std::size_t>(a) * BLK + lane];
  return out;
}

void BatchEval::evaluate(const MlpField& field, const Vec3* pts, int n, bool with_gradient,
                         int threads) {
  field_ = &field;
  n_ = n;
  threads_ = std::max(1, threads);
  with_gradient_ = with_gradient;
  const PanelDims pd = dims_of(field);
  sum_h_ = pd.sum_h;
  layer_off_ = pd.off;
  panels_ = (n + BLK - 1) / BLK;

  xs_.resize(static_cast<std::size_t>(panels_) * pd.d * BLK);
  f_.resize(static_cast<std::size_t>(panels_) * BLK);
  as_.resize(static_cast<std::size_t>(panels_) * pd.sum_h * BLK);
  sigs_.resize(static_cast<std::size_t>(panels_) * pd.sum_h * BLK);
  if (with_gradient) {
    rs_.resize(static_cast<std::size_t>(panels_) * pd.sum_h * BLK);
    gs_.resize(static_cast<std::size_t>(panels_) * pd.d * BLK);
  }
  if (n == 0) return;

  const int L = pd.L, d = pd.d;
  const int skip = field.skip_layer();
  parallel_for(panels_, threads_, [&](std::size_t pb, std::size_t pe, int) {
    std::vector<double> zbuf(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> tbuf(static_cast<std::size_t>(pd.max_h) * BLK);
    for (std::size_t panel = pb; panel < pe; ++panel) {
      double* x = xs_.data() + panel * d * BLK;
      for (int p = 0; p < BLK; ++p) {
        const int src = std::min<int>(static_cast<int>(panel) * BLK + p, n - 1);
        for (int a = 0; a < d; ++a) x[static_cast<std::size_t>(a) * BLK + p] = (&pts[src].x)[a];
      }
      double* a = as_.data() + panel * pd.sum_h * BLK;
      double* sg = sigs_.data() + panel * pd.sum_h * BLK;

      const double* in = x;
      for (int l = 0; l < L; ++l) {
        const auto& s = field.shape(l);
        const int acts = field.act_cols(l);
        panel_affine(field.w(l), field.b(l), s.rows, s.cols, acts, in, x, d, l == skip,
                     zbuf.data());
        double* al = a + static_cast<std::size_t>(pd.off[l]) * BLK;
        double* sl = sg + static_cast<std::size_t>(pd.off[l]) * BLK;
        const double beta = field.beta();
        for (int e = 0; e < s.rows * BLK; ++e) {
          al[e] = softplus(zbuf[e], beta);
          sl[e] = softplus_d1(zbuf[e], beta);
        }
        in = al;
      }
      const int last = field.hidden().back();
      const double* wout = field.w(L);
      double* fo = f_.data() + panel * BLK;
      const double bo = field.b(L)[0];
      for (int p = 0; p < BLK; ++p) fo[p] = bo;
      for (int i = 0; i < last; ++i) {
        const double w = wout[i];
        const double* ip = in + static_cast<std::size_t>(i) * BLK;
        for (int p = 0; p < BLK; ++p) fo[p] += w * ip[p];
      }

      if (!with_gradient) continue;
      double* r = rs_.data() + panel * pd.sum_h * BLK;
      double* g = gs_.data() + panel * d * BLK;
      std::memset(g, 0, static_cast<std::size_t>(d) * BLK * sizeof(double));
      double* rl = r + static_cast<std::size_t>(pd.off[L - 1]) * BLK;
      for (int o = 0; o < last; ++o) {
        const double w = wout[o];
        for (int p = 0; p < BLK; ++p) rl[static_cast<std::size_t>(o) * BLK + p] = w;
      }
      for (int l = L - 1; l >= 0; --l) {
        const auto& s = field.shape(l);
        const int acts = field.act_cols(l);
        const double* sl = sg + static_cast<std::size_t>(pd.off[l]) * BLK;
        const double* rcur = r + static_cast<std::size_t>(pd.off[l]) * BLK;
        for (int e = 0; e < s.rows * BLK; ++e) tbuf[e] = sl[e] * rcur[e];
        if (l > 0) {
          double* rprev = r + static_cast<std::size_t>(pd.off[l - 1]) * BLK;
          panel_affine_t(field.w(l), s.rows, s.cols, 0, acts, tbuf.data(), rprev, false);
        } else {
          panel_affine_t(field.w(l), s.rows, s.cols, 0, acts, tbuf.data(), g, true);
        }
        if (l == skip) panel_affine_t(field.w(l), s.rows, s.cols, acts, d, tbuf.data(), g, true);
      }
    }
  });
}

void BatchEval::hessian_vec(const Vec3* v, Vec3* out) const {
  const MlpField& field = *field_;
  const PanelDims pd = dims_of(field);
  const int L = pd.L, d = pd.d;
  const int skip = field.skip_layer();
  const double beta = field.beta();
  parallel_for(panels_, threads_, [&](std::size_t pb, std::size_t pe, int) {
    std::vector<double> zd(static_cast<std::size_t>(pd.sum_h) * BLK);
    std::vector<double> ad(static_cast<std::size_t>(std::max(pd.max_h, d)) * BLK);
    std::vector<double> ad2(ad.size());
    std::vector<double> td(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> rd(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> rd2(rd.size());
    std::vector<double> vx(static_cast<std::size_t>(d) * BLK);
    std::vector<double> hv(static_cast<std::size_t>(d) * BLK);
    for (std::size_t panel = pb; panel < pe; ++panel) {
      const int lanes = std::min<int>(BLK, n_ - static_cast<int>(panel) * BLK);
      for (int p = 0; p < BLK; ++p) {
        const int src = std::min<int>(static_cast<int>(panel) * BLK + p, n_ - 1);
        for (int a = 0; a < d; ++a) vx[static_cast<std::size_t>(a) * BLK + p] = (&v[src].x)[a];
      }
      const double* sg = sigs_.data() + panel * pd.sum_h * BLK;
      const double* r = rs_.data() + panel * pd.sum_h * BLK;

      std::memcpy(ad.data(), vx.data(), vx.size() * sizeof(double));
      for (int l = 0; l < L; ++l) {
        const auto& s = field.shape(l);
        const int acts = field.act_cols(l);
        double* zl = zd.data() + static_cast<std::size_t>(pd.off[l]) * BLK;
        // No bias on dual channels.
        std::memset(zl, 0, static_cast<std::size_t>(s.rows) * BLK * sizeof(double));
        for (int o = 0; o < s.rows; ++o) {
          const double* row = field.w(l) + static_cast<std::size_t>(o) * s.cols;
          double* zo = zl + static_cast<std::size_t>(o) * BLK;
          for (int i = 0; i < acts; ++i) {
            const double w = row[i];
            const double* ip = ad.data() + static_cast<std::size_t>(i) * BLK;
            for (int p = 0; p < BLK; ++p) zo[p] += w * ip[p];
          }
          if (l == skip)
            for (int i = 0; i < d; ++i) {
              const double w = row[acts + i];
              const double* ip = vx.data() + static_cast<std::size_t>(i) * BLK;
              for (int p = 0; p < BLK; ++p) zo[p] += w * ip[p];
            }
        }
        const double* sl = sg + static_cast<std::size_t>(pd.off[l]) * BLK;
        for (int e = 0; e < s.rows * BLK; ++e) ad2[e] = sl[e] * zl[e];
        ad.swap(ad2);
      }

      std::memset(hv.data(), 0, hv.size() * sizeof(double));
      std::memset(rd.data(), 0, static_cast<std::size_t>(field.hidden().back()) * BLK * sizeof(double));
      for (int l = L - 1; l >= 0; --l) {
        const auto& s = field.shape(l);
        const int acts = field.act_cols(l);
        const double* sl = sg + static_cast<std::size_t>(pd.off[l]) * BLK;
        const double* rl = r + static_cast<std::size_t>(pd.off[l]) * BLK;
        const double* zl = zd.data() + static_cast<std::size_t>(pd.off[l]) * BLK;
        for (int e = 0; e < s.rows * BLK; ++e) {
          const double sp2 = beta * sl[e] * (1.0 - sl[e]);
          td[e] = sp2 * zl[e] * rl[e] + sl[e] * rd[e];
        }
        if (l > 0) {
          panel_affine_t(field.w(l), s.rows, s.cols, 0, acts, td.data(), rd2.data(), false);
          rd.swap(rd2);
        } else {
          panel_affine_t(field.w(l), s.rows, s.cols, 0, acts, td.data(), hv.data(), true);
        }
        if (l == skip)
          panel_affine_t(field.w(l), s.rows, s.cols, acts, d, td.data(), hv.data(), true);
      }
      for (int p = 0; p < lanes; ++p) {
        Vec3 o{0, 0, 0};
        for (int a = 0; a < d; ++a) (&o.x)[a] = hv[static_cast<std::size_t>(a) * BLK + p];
        out[panel * BLK + p] = o;
      }
    }
  });
}

void BatchEval::param_backprop(const double* df, const Vec3* dg, ParamGrad& out) const {
  const MlpField& field = *field_;
  const PanelDims pd = dims_of(field);
  const int L = pd.L, d = pd.d;
  const int skip = field.skip_layer();
  const double beta = field.beta();
  const int workers = std::max(1, std::min<int>(threads_, panels_));

  std::vector<ParamGrad> partial(workers, ParamGrad(field.n_params()));
  parallel_for(panels_, workers, [&](std::size_t pb, std::size_t pe, int worker) {
    ParamGrad& G = partial[worker];
    std::vector<double> cbuf(static_cast<std::size_t>(pd.sum_h) * BLK);
    std::vector<double> ar(static_cast<std::size_t>(std::max(pd.max_h, d)) * BLK);
    std::vector<double> ar2(ar.size());
    std::vector<double> ebuf(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> tbuf(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> aabuf(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> aabuf2(aabuf.size());
    std::vector<double> dfp(BLK), dgp(static_cast<std::size_t>(d) * BLK);
    for (std::size_t panel = pb; panel < pe; ++panel) {
      const int lanes = std::min<int>(BLK, n_ - static_cast<int>(panel) * BLK);
      bool any_df = false, any_dg = false;
      for (int p = 0; p < BLK; ++p) {
        const int i = static_cast<int>(panel) * BLK + p;
        const double fv = (p < lanes && df) ? df[i] : 0.0;
        dfp[p] = fv;
        any_df |= fv != 0.0;
        for (int a = 0; a < d; ++a) {
          const double gv = (p < lanes && dg) ? (&dg[i].x)[a] : 0.0;
          dgp[static_cast<std::size_t>(a) * BLK + p] = gv;
          any_dg |= gv != 0.0;
        }
      }
      if (!any_df && !any_dg) continue;

      const double* x = xs_.data() + panel * d * BLK;
      const double* a = as_.data() + panel * pd.sum_h * BLK;
      const double* sg = sigs_.data() + panel * pd.sum_h * BLK;
      const double* r = rs_.data() + panel * pd.sum_h * BLK;

      // Ascending sweep: reverse of the input-gradient computation.
      if (any_dg) {
        std::memcpy(ar.data(), dgp.data(), dgp.size() * sizeof(double));
        for (int l = 0; l < L; ++l) {
          const auto& s = field.shape(l);
          const int acts = field.act_cols(l);
          const double* W = field.w(l);
          const double* sl = sg + static_cast<std::size_t>(pd.off[l]) * BLK;
          const double* rl = r + static_cast<std::size_t>(pd.off[l]) * BLK;
          double* cl = cbuf.data() + static_cast<std::size_t>(pd.off[l]) * BLK;
          double* GW = G.v.data() + s.w_off;
          for (int o = 0; o < s.rows; ++o) {
            const double* row = W + static_cast<std::size_t>(o) * s.cols;
            double* eo = ebuf.data() + static_cast<std::size_t>(o) * BLK;
            for (int p = 0; p < BLK; ++p) eo[p] = 0.0;
            for (int i = 0; i < acts; ++i) {
              const double w = row[i];
              const double* ip = ar.data() + static_cast<std::size_t>(i) * BLK;
              for (int p = 0; p < BLK; ++p) eo[p] += w * ip[p];
            }
            if (l == skip)
              for (int i = 0; i < d; ++i) {
                const double w = row[acts + i];
                const double* ip = dgp.data() + static_cast<std::size_t>(i) * BLK;
                for (int p = 0; p < BLK; ++p) eo[p] += w * ip[p];
              }
          }
          for (int e = 0; e < s.rows * BLK; ++e) tbuf[e] = sl[e] * rl[e];
          panel_outer(tbuf.data(), ar.data(), s.rows, s.cols, 0, acts, GW);
          if (l == skip) panel_outer(tbuf.data(), dgp.data(), s.rows, s.cols, acts, d, GW);
          for (int e = 0; e < s.rows * BLK; ++e) {
            const double sp2 = beta * sl[e] * (1.0 - sl[e]);
            cl[e] = sp2 * rl[e] * ebuf[e];
            ar2[e] = sl[e] * ebuf[e];
          }
          ar.swap(ar2);
        }
        const auto& so = field.shape(L);
        double* GWo = G.v.data() + so.w_off;
        for (int i = 0; i < so.cols; ++i) {
          const double* ip = ar.data() + static_cast<std::size_t>(i) * BLK;
          double acc = 0.0;
          for (int p = 0; p < BLK; ++p) acc += ip[p];
          GWo[i] += acc;
        }
      } else {
        std::memset(cbuf.data(), 0, cbuf.size() * sizeof(double));
      }

      // Descending sweep: reverse of the plain forward pass.
      const auto& so = field.shape(L);
      const double* wout = field.w(L);
      const double* alast = a + static_cast<std::size_t>(pd.off[L - 1]) * BLK;
      for (int o = 0; o < so.cols; ++o) {
        double* ao = aabuf.data() + static_cast<std::size_t>(o) * BLK;
        const double w = wout[o];
        for (int p = 0; p < BLK; ++p) ao[p] = dfp[p] * w;
      }
      if (any_df) {
        double* GWo = G.v.data() + so.w_off;
        for (int i = 0; i < so.cols; ++i) {
          const double* ip = alast + static_cast<std::size_t>(i) * BLK;
          double acc = 0.0;
          for (int p = 0; p < BLK; ++p) acc += dfp[p] * ip[p];
          GWo[i] += acc;
        }
        double acc = 0.0;
        for (int p = 0; p < BLK; ++p) acc += dfp[p];
        G.v[so.b_off] += acc;
      }
      for (int l = L - 1; l >= 0; --l) {
        const auto& s = field.shape(l);
        const int acts = field.act_cols(l);
        const double* sl = sg + static_cast<std::size_t>(pd.off[l]) * BLK;
        double* cl = cbuf.data() + static_cast<std::size_t>(pd.off[l]) * BLK;
        for (int e = 0; e < s.rows * BLK; ++e) cl[e] += sl[e] * aabuf[e];
        const double* u = l == 0 ? x : a + static_cast<std::size_t>(pd.off[l - 1]) * BLK;
        double* GW = G.v.data() + s.w_off;
        panel_outer(cl, u, s.rows, s.cols, 0, acts, GW);
        if (l == skip) panel_outer(cl, x, s.rows, s.cols, acts, d, GW);
        double* Gb = G.v.data() + s.b_off;
        for (int o = 0; o < s.rows; ++o) {
          const double* co = cl + static_cast<std::size_t>(o) * BLK;
          double acc = 0.0;
          for (int p = 0; p < BLK; ++p) acc += co[p];
          Gb[o] += acc;
        }
        if (l > 0) {
          panel_affine_t(field.w(l), s.rows, s.cols, 0, acts, cl, aabuf2.data(), false);
          aabuf.swap(aabuf2);
        }
      }
    }
  });
  for (int w = 0; w < workers; ++w) out.axpy(1.0, partial[w]);
}

void eval_values(const MlpField& field, const Vec3* pts, std::size_t n, double* out,
                 int threads) {
  if (n == 0) return;
  const PanelDims pd = dims_of(field);
  const int L = pd.L, d = pd.d;
  const int skip = field.skip_layer();
  const double beta = field.beta();
  const std::size_t panels = (n + BLK - 1) / BLK;
  parallel_for(panels, threads, [&](std::size_t pb, std::size_t pe, int) {
    std::vector<double> x(static_cast<std::size_t>(d) * BLK);
    std::vector<double> bufa(static_cast<std::size_t>(pd.max_h) * BLK);
    std::vector<double> bufb(bufa.size());
    for (std::size_t panel = pb; panel < pe; ++panel) {
      const int lanes = std::min<std::size_t>(BLK, n - panel * BLK);
      for (int p = 0; p < BLK; ++p) {
        const std::size_t src = std::min(panel * BLK + p, n - 1);
        for (int a = 0; a < d; ++a) x[static_cast<std::size_t>(a) * BLK + p] = (&pts[src].x)[a];
      }
      const double* in = x.data();
      double* cur = bufa.data();
      double* nxt = bufb.data();
      for (int l = 0; l < L; ++l) {
        const auto& s = field.shape(l);
        const int acts = field.act_cols(l);
        panel_affine(field.w(l), field.b(l), s.rows, s.cols, acts, in, x.data(), d, l == skip,
                     cur);
        for (int e = 0; e < s.rows * BLK; ++e) cur[e] = softplus(cur[e], beta);
        in = cur;
        std::swap(cur, nxt);
      }
      const int last = field.hidden().back();
      const double* wout = field.w(L);
      double acc[BLK];
      const double bo = field.b(L)[0];
      for (int p = 0; p < BLK; ++p) acc[p] = bo;
      for (int i = 0; i < last; ++i) {
        const double w = wout[i];
        const double* ip = in + static_cast<std::size_t>(i) * BLK;
        for (int p = 0; p < BLK; ++p) acc[p] += w * ip[p];
      }
      for (int p = 0; p < lanes; ++p) out[panel * BLK + p] = acc[p];
    }
  });
}

std::pair<double, ParamGrad> grad_params_of_loss(const LossEvaluator& loss,
                                                 const MlpField& field,
                                                 const geom::QueryBatch& batch) {
  if (batch.size() == 0)
    throw InputError(std::string(loss.name()) + ": empty batch");
  ParamGrad grad(field.n_params());
  const double value = loss.value_and_grad(field, batch, grad);
  if (!std::isfinite(value))
    throw TrainingError(std::string(loss.name()) + ": non-finite loss value");
  if (!grad.finite())
    throw TrainingError(std::string(loss.name()) + ": non-finite parameter gradient");
  return {value, std::move(grad)};
}

}  // namespace ifsdf::ad
