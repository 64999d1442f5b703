#include "ifsdf/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ifsdf/errors.hpp"
#include "ifsdf/rng.hpp"

namespace ifsdf::net {

namespace {
constexpr char kMagic[6] = {'I', 'F', 'S', 'D', 'F', '1'};
constexpr std::uint16_t kVersion = 1;
// Beyond this |beta*z| the softplus branches are exact at double precision.
constexpr double kSaturate = 40.0;
}  // namespace

double softplus(double z, double beta) {
  const double t = beta * z;
  if (t > kSaturate) return z;
  if (t < -kSaturate) return 0.0;
  return std::log1p(std::exp(t)) / beta;
}

double softplus_d1(double z, double beta) {
  const double t = beta * z;
  if (t > kSaturate) return 1.0;
  if (t < -kSaturate) return 0.0;
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus_d2(double z, double beta) {
  const double s = softplus_d1(z, beta);
  return beta * s * (1.0 - s);
}

MlpField::MlpField(int input_dim, std::vector<int> hidden, int skip_layer, double beta)
    : input_dim_(input_dim), hidden_(std::move(hidden)), skip_layer_(skip_layer), beta_(beta) {
  if (input_dim_ != 2 && input_dim_ != 3) throw InputError("MlpField: input_dim must be 2 or 3");
  if (hidden_.empty()) throw InputError("MlpField: need at least one hidden layer");
  for (int h : hidden_)
    if (h < 1) throw InputError("MlpField: hidden widths must be positive");
  if (skip_layer_ == 0 || skip_layer_ >= static_cast<int>(hidden_.size()))
    throw InputError("MlpField: skip_layer out of range");
  if (beta_ <= 0.0) throw InputError("MlpField: beta must be positive");

  const int layers = layer_count();
  shapes_.resize(layers);
  act_cols_.resize(layers);
  std::size_t off = 0;
  for (int l = 0; l < layers; ++l) {
    const int rows = l < layers - 1 ? hidden_[l] : 1;
    const int acts = l == 0 ? input_dim_ : hidden_[l - 1];
    const int cols = acts + (l == skip_layer_ ? input_dim_ : 0);
    act_cols_[l] = l == 0 ? input_dim_ : acts;
    shapes_[l].rows = rows;
    shapes_[l].cols = cols;
    shapes_[l].w_off = off;
    off += static_cast<std::size_t>(rows) * cols;
    shapes_[l].b_off = off;
    off += rows;
  }
  params_.assign(off, 0.0);
}

int MlpField::act_cols(int layer) const { return act_cols_[layer]; }

double MlpField::value(const Vec3& q) const { return eval(q).value; }

SdfSample MlpField::eval(const Vec3& q) const {
  const int d = input_dim_;
  const int layers = layer_count();
  // Forward, keeping activations and sigmoid factors for the reverse sweep.
  std::vector<std::vector<double>> a(layers - 1), sig(layers - 1);
  const double* prev = &q.x;
  int prev_n = d;
  for (int l = 0; l < layers - 1; ++l) {
    const LayerShape& s = shapes_[l];
    a[l].resize(s.rows);
    sig[l].resize(s.rows);
    const double* W = w(l);
    const double* B = b(l);
    const int acts = act_cols_[l];
    for (int o = 0; o < s.rows; ++o) {
      double z = B[o];
      const double* row = W + static_cast<std::size_t>(o) * s.cols;
      for (int i = 0; i < acts; ++i) z += row[i] * prev[i];
      if (l == skip_layer_)
        for (int i = 0; i < d; ++i) z += row[acts + i] * (&q.x)[i];
      sig[l][o] = softplus_d1(z, beta_);
      a[l][o] = softplus(z, beta_);
    }
    prev = a[l].data();
    prev_n = s.rows;
  }
  const LayerShape& out = shapes_[layers - 1];
  double y = b(layers - 1)[0];
  for (int i = 0; i < prev_n; ++i) y += w(layers - 1)[i] * prev[i];

  // Reverse sweep for the input gradient.
  std::vector<double> r(prev_n), next;
  for (int i = 0; i < prev_n; ++i) r[i] = w(layers - 1)[i];
  Vec3 g{0, 0, 0};
  for (int l = layers - 2; l >= 0; --l) {
    const LayerShape& s = shapes_[l];
    const double* W = w(l);
    const int acts = act_cols_[l];
    next.assign(acts, 0.0);
    for (int o = 0; o < s.rows; ++o) {
      const double t = sig[l][o] * r[o];
      if (t == 0.0) continue;
      const double* row = W + static_cast<std::size_t>(o) * s.cols;
      if (l > 0)
        for (int i = 0; i < acts; ++i) next[i] += row[i] * t;
      else
        for (int i = 0; i < acts; ++i) (&g.x)[i] += row[i] * t;
      if (l == skip_layer_)
        for (int i = 0; i < d; ++i) (&g.x)[i] += row[acts + i] * t;
    }
    r.swap(next);
  }
  (void)out;
  return {y, g};
}

namespace {

// In-place Cholesky solve of (G + lambda I) x = rhs for SPD G.
void cholesky_solve(std::vector<double>& G, std::vector<double>& x, int n, double lambda) {
  for (int i = 0; i < n; ++i) G[static_cast<std::size_t>(i) * n + i] += lambda;
  for (int c = 0; c < n; ++c) {
    double diag = G[static_cast<std::size_t>(c) * n + c];
    for (int k = 0; k < c; ++k) {
      const double l = G[static_cast<std::size_t>(c) * n + k];
      diag -= l * l;
    }
    diag = std::sqrt(std::max(diag, 1e-30));
    G[static_cast<std::size_t>(c) * n + c] = diag;
    for (int r = c + 1; r < n; ++r) {
      double v = G[static_cast<std::size_t>(r) * n + c];
      for (int k = 0; k < c; ++k)
        v -= G[static_cast<std::size_t>(r) * n + k] * G[static_cast<std::size_t>(c) * n + k];
      G[static_cast<std::size_t>(r) * n + c] = v / diag;
    }
  }
  for (int r = 0; r < n; ++r) {
    double v = x[r];
    for (int k = 0; k < r; ++k) v -= G[static_cast<std::size_t>(r) * n + k] * x[k];
    x[r] = v / G[static_cast<std::size_t>(r) * n + r];
  }
  for (int r = n - 1; r >= 0; --r) {
    double v = x[r];
    for (int k = r + 1; k < n; ++k) v -= G[static_cast<std::size_t>(k) * n + r] * x[k];
    x[r] = v / G[static_cast<std::size_t>(r) * n + r];
  }
}

}  // namespace

MlpField geometric_init(const std::vector<int>& hidden, double radius, std::uint64_t seed,
                        int input_dim, double beta, int skip_layer) {
  if (radius <= 0.0) throw InputError("geometric_init: radius must be positive");
  if (skip_layer == -2) skip_layer = hidden.size() >= 2 ? static_cast<int>(hidden.size()) / 2 : -1;
  MlpField f(input_dim, hidden, skip_layer, beta);
  Rng rng(seed);
  const int layers = f.layer_count();
  for (int l = 0; l < layers - 1; ++l) {
    const auto& s = f.shape(l);
    double* W = f.w(l);
    const double std_w = std::sqrt(2.0) / std::sqrt(static_cast<double>(s.rows));
    const int acts = f.act_cols(l);
    for (int o = 0; o < s.rows; ++o)
      for (int i = 0; i < s.cols; ++i)
        // Skip columns start at zero so the fresh field matches the no-skip
        // construction exactly; training fills them in.
        W[static_cast<std::size_t>(o) * s.cols + i] =
            (l != 0 && i >= acts) ? 0.0 : std_w * rng.normal();
    for (int o = 0; o < s.rows; ++o) f.b(l)[o] = 0.0;
  }

  // Output layer: ridge regression of the sphere SDF on the random hidden
  // features. A closed-form readout keeps the sphere property tight at small
  // widths, where the purely statistical scaling drifts by several percent.
  const int last = hidden.back();
  const int nf = last + 1;  // bias folded in as a constant feature
  const int samples = std::max(2048, 8 * nf);
  std::vector<double> gram(static_cast<std::size_t>(nf) * nf, 0.0);
  std::vector<double> rhs(nf, 0.0);
  std::vector<double> feat(nf);
  for (int si = 0; si < samples; ++si) {
    Vec3 x{0, 0, 0};
    for (int a = 0; a < input_dim; ++a) (&x.x)[a] = rng.uniform(-0.6, 0.6);
    // Forward through the hidden stack.
    std::vector<double> prev(&x.x, &x.x + input_dim), cur;
    for (int l = 0; l < layers - 1; ++l) {
      const auto& s = f.shape(l);
      const int acts = f.act_cols(l);
      cur.resize(s.rows);
      for (int o = 0; o < s.rows; ++o) {
        double z = 0.0;
        const double* row = f.w(l) + static_cast<std::size_t>(o) * s.cols;
        for (int i = 0; i < acts; ++i) z += row[i] * prev[i];
        cur[o] = softplus(z, beta);
      }
      prev.swap(cur);
    }
    for (int i = 0; i < last; ++i) feat[i] = prev[i];
    feat[last] = 1.0;
    const double target = norm(x) - radius;
    for (int r = 0; r < nf; ++r) {
      rhs[r] += feat[r] * target;
      for (int c = 0; c <= r; ++c) gram[static_cast<std::size_t>(r) * nf + c] += feat[r] * feat[c];
    }
  }
  for (int r = 0; r < nf; ++r)
    for (int c = r + 1; c < nf; ++c)
      gram[static_cast<std::size_t>(r) * nf + c] = gram[static_cast<std::size_t>(c) * nf + r];
  cholesky_solve(gram, rhs, nf, 1e-6 * samples);
  for (int i = 0; i < last; ++i) f.w(layers - 1)[i] = rhs[i];
  f.b(layers - 1)[0] = rhs[last];
  return f;
}

MlpField random_init(const std::vector<int>& hidden, std::uint64_t seed, int input_dim,
                     double beta, int skip_layer) {
  MlpField f(input_dim, hidden, skip_layer, beta);
  Rng rng(seed);
  const int layers = f.layer_count();
  for (int l = 0; l < layers; ++l) {
    const auto& s = f.shape(l);
    const double std_w = 1.0 / std::sqrt(static_cast<double>(s.cols));
    double* W = f.w(l);
    double* B = f.b(l);
    for (int i = 0; i < s.rows * s.cols; ++i) W[i] = std_w * rng.normal();
    for (int o = 0; o < s.rows; ++o) B[o] = 0.1 * rng.normal();
  }
  return f;
}

namespace {

template <class T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError(std::string("checkpoint truncated reading ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const MlpField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(field.input_dim()));
  put(out, static_cast<std::uint32_t>(field.hidden().size()));
  put(out, static_cast<std::int32_t>(field.skip_layer()));
  put(out, field.beta());
  for (int h : field.hidden()) put(out, static_cast<std::uint32_t>(h));
  put(out, field.norm.center.x);
  put(out, field.norm.center.y);
  put(out, field.norm.center.z);
  put(out, field.norm.scale);
  put(out, static_cast<std::uint64_t>(field.n_params()));
  out.write(reinterpret_cast<const char*>(field.params().data()),
            static_cast<std::streamsize>(field.n_params() * sizeof(double)));
  if (!out) throw InputError("failed writing checkpoint: " + path);
}

MlpField load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InputError("not an IFSDF1 checkpoint: " + path);
  const auto version = get<std::uint16_t>(in, "version");
  if (version != kVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  const auto input_dim = get<std::uint32_t>(in, "input_dim");
  const auto n_hidden = get<std::uint32_t>(in, "hidden count");
  const auto skip = get<std::int32_t>(in, "skip_layer");
  const auto beta = get<double>(in, "beta");
  std::vector<int> hidden(n_hidden);
  for (auto& h : hidden) h = static_cast<int>(get<std::uint32_t>(in, "hidden width"));
  MlpField f(static_cast<int>(input_dim), hidden, skip, beta);
  f.norm.center.x = get<double>(in, "center");
  f.norm.center.y = get<double>(in, "center");
  f.norm.center.z = get<double>(in, "center");
  f.norm.scale = get<double>(in, "scale");
  const auto n = get<std::uint64_t>(in, "param count");
  if (n != f.n_params())
    throw InputError("checkpoint parameter count mismatch: " + std::to_string(n) + " vs " +
                     std::to_string(f.n_params()));
  in.read(reinterpret_cast<char*>(f.params().data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw InputError("checkpoint truncated reading parameters");
  return f;
}

}  // namespace ifsdf::net
