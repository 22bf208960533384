// SPDX-License-Identifier: Apache-2.0
#include "rlx/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>

#include "rlx/wire.hpp"

namespace rlx::nn {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

struct ConvShape {
  int in_ch, in_len, kernel, pad, out_ch, out_len;
  std::size_t weight_count() const { return static_cast<std::size_t>(out_ch) * in_ch * kernel; }
  std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out_ch); }
};

/// Resolves the parameterised layers into concrete shapes.
std::vector<ConvShape> conv_shapes(const NetArchitecture& arch) {
  std::vector<ConvShape> shapes;
  int ch = arch.in_channels;
  int len = arch.points_per_element;
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::ScaleSigmoid) continue;
    ConvShape s{};
    s.in_ch = ch;
    s.in_len = len;
    s.kernel = l.kind == LayerKind::Dense ? len : l.kernel;
    s.pad = (l.kind == LayerKind::Conv1D && l.padding == Padding::Zero) ? (s.kernel - 1) / 2 : 0;
    s.out_ch = l.filters;
    s.out_len = len + 2 * s.pad - s.kernel + 1;
    if (s.kernel < 1 || s.out_len < 1 || s.out_ch < 1) {
      throw ShapeMismatch("layer collapses input of length " + std::to_string(len) + " below 1");
    }
    shapes.push_back(s);
    ch = s.out_ch;
    len = s.out_len;
  }
  return shapes;
}

std::vector<const LayerSpec*> param_layers(const NetArchitecture& arch) {
  std::vector<const LayerSpec*> out;
  for (const auto& l : arch.layers) {
    if (l.kind != LayerKind::ScaleSigmoid) out.push_back(&l);
  }
  return out;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log |da/dz| for a = 0.5 sigmoid(z).
double log_abs_jacobian(double z) { return std::log(kActionScale) - softplus(-z) - softplus(z); }

void check_state(const NetArchitecture& arch, std::span<const double> state) {
  const auto m = static_cast<std::size_t>(arch.points_per_element * arch.in_channels);
  if (state.empty() || state.size() % m != 0) {
    throw ShapeMismatch("state of length " + std::to_string(state.size()) + " is not a multiple of the element extent " +
                        std::to_string(m));
  }
}

}  // namespace

NetArchitecture NetArchitecture::policy_default(int m) {
  NetArchitecture a;
  a.points_per_element = m;
  a.in_channels = 1;
  a.layers = {
      {LayerKind::Conv1D, 3, 8, Padding::Zero, Activation::ReLU},
      {LayerKind::Conv1D, 3, 8, Padding::None, Activation::ReLU},
      {LayerKind::Conv1D, m - 2, 1, Padding::None, Activation::None},
      {LayerKind::ScaleSigmoid, 0, 1, Padding::None, Activation::None},
  };
  a.validate();
  return a;
}

void NetArchitecture::validate() const {
  if (points_per_element < 1 || in_channels < 1) throw ShapeMismatch("empty element input");
  const auto shapes = conv_shapes(*this);
  if (shapes.empty() || shapes.back().out_ch != 1 || shapes.back().out_len != 1) {
    throw ShapeMismatch("trunk must reduce each element to a single scalar");
  }
}

std::size_t NetArchitecture::trunk_param_count() const {
  std::size_t n = 0;
  for (const auto& s : conv_shapes(*this)) n += s.param_count();
  return n;
}

// --- Initialisation ---------------------------------------------------------

namespace {

/// rows x cols matrix with orthonormal rows or columns (whichever is fewer), times gain.
std::vector<double> orthogonal(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  // `small` orthonormal vectors of length `big` by Gram-Schmidt.
  std::vector<std::vector<double>> q(static_cast<std::size_t>(small), std::vector<double>(big));
  for (int i = 0; i < small; ++i) {
    auto& v = q[i];
    for (auto& x : v) x = normal(rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < i; ++j) {
        const double d = std::inner_product(v.begin(), v.end(), q[j].begin(), 0.0);
        for (int t = 0; t < big; ++t) v[t] -= d * q[j][t];
      }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (auto& x : v) x /= norm;
  }
  std::vector<double> w(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      w[static_cast<std::size_t>(r) * cols + c] = gain * (rows >= cols ? q[c][r] : q[r][c]);
    }
  }
  return w;
}

std::vector<double> init_trunk(const NetArchitecture& arch, double final_gain, std::mt19937_64& rng) {
  std::vector<double> w;
  const auto shapes = conv_shapes(arch);
  const auto layers = param_layers(arch);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    const bool last = i + 1 == shapes.size();
    const double gain = last ? final_gain : (layers[i]->activation == Activation::ReLU ? std::numbers::sqrt2 : 1.0);
    const auto m = orthogonal(s.out_ch, s.in_ch * s.kernel, gain, rng);
    w.insert(w.end(), m.begin(), m.end());
    w.insert(w.end(), static_cast<std::size_t>(s.out_ch), 0.0);
  }
  return w;
}

}  // namespace

PolicyParams init_params(const NetArchitecture& arch, std::uint64_t seed, double log_std_init) {
  arch.validate();
  std::mt19937_64 rng(seed);
  PolicyParams p;
  p.arch = arch;
  p.theta = init_trunk(arch, 0.01, rng);
  p.theta.push_back(std::clamp(log_std_init, kLogStdMin, kLogStdMax));
  p.value_params = init_trunk(arch, 1.0, rng);
  p.value_params.push_back(1.0);  // head weight
  p.value_params.push_back(0.0);  // head bias
  return p;
}

// --- Trunk ------------------------------------------------------------------

double trunk_forward(const NetArchitecture& arch, std::span<const double> weights, std::span<const double> input,
                     TrunkTape* tape) {
  const auto shapes = conv_shapes(arch);
  const auto layers = param_layers(arch);
  if (input.size() != static_cast<std::size_t>(arch.points_per_element * arch.in_channels)) {
    throw ShapeMismatch("element input has wrong length");
  }
  std::vector<double> x(input.begin(), input.end());
  std::size_t offset = 0;
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const auto& s = shapes[li];
    const double* w = weights.data() + offset;
    const double* b = w + s.weight_count();
    std::vector<double> y(static_cast<std::size_t>(s.out_ch) * s.out_len);
    for (int o = 0; o < s.out_ch; ++o) {
      for (int i = 0; i < s.out_len; ++i) {
        double acc = b[o];
        for (int c = 0; c < s.in_ch; ++c) {
          const double* wk = w + (static_cast<std::size_t>(o) * s.in_ch + c) * s.kernel;
          const double* xc = x.data() + static_cast<std::size_t>(c) * s.in_len;
          for (int j = 0; j < s.kernel; ++j) {
            const int src = i + j - s.pad;
            if (src >= 0 && src < s.in_len) acc += wk[j] * xc[src];
          }
        }
        y[static_cast<std::size_t>(o) * s.out_len + i] = acc;
      }
    }
    if (tape) {
      tape->inputs.push_back(x);
      tape->pre.push_back(y);
    }
    if (layers[li]->activation == Activation::ReLU) {
      for (auto& v : y) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(y);
    offset += s.param_count();
  }
  if (offset > weights.size()) throw ShapeMismatch("weight vector too short for architecture");
  return x.front();
}

void trunk_backward(const NetArchitecture& arch, std::span<const double> weights, const TrunkTape& tape, double dout,
                    std::span<double> grad) {
  const auto shapes = conv_shapes(arch);
  const auto layers = param_layers(arch);
  std::vector<std::size_t> offsets(shapes.size());
  std::size_t off = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    offsets[i] = off;
    off += shapes[i].param_count();
  }
  std::vector<double> dy{dout};  // gradient w.r.t. the post-activation output of the current layer
  for (std::size_t li = shapes.size(); li-- > 0;) {
    const auto& s = shapes[li];
    const auto& pre = tape.pre[li];
    const auto& x = tape.inputs[li];
    if (layers[li]->activation == Activation::ReLU) {
      for (std::size_t t = 0; t < dy.size(); ++t) dy[t] = pre[t] > 0.0 ? dy[t] : 0.0;
    }
    const double* w = weights.data() + offsets[li];
    double* gw = grad.data() + offsets[li];
    double* gb = gw + s.weight_count();
    std::vector<double> dx(static_cast<std::size_t>(s.in_ch) * s.in_len, 0.0);
    for (int o = 0; o < s.out_ch; ++o) {
      for (int i = 0; i < s.out_len; ++i) {
        const double g = dy[static_cast<std::size_t>(o) * s.out_len + i];
        if (g == 0.0) continue;
        gb[o] += g;
        for (int c = 0; c < s.in_ch; ++c) {
          const std::size_t wbase = (static_cast<std::size_t>(o) * s.in_ch + c) * s.kernel;
          const std::size_t xbase = static_cast<std::size_t>(c) * s.in_len;
          for (int j = 0; j < s.kernel; ++j) {
            const int src = i + j - s.pad;
            if (src < 0 || src >= s.in_len) continue;
            gw[wbase + j] += g * x[xbase + src];
            dx[xbase + src] += g * w[wbase + j];
          }
        }
      }
    }
    dy = std::move(dx);
  }
}

// --- Policy / value ---------------------------------------------------------

ActionDistribution policy_forward(const PolicyParams& p, std::span<const double> state, Tape* tape) {
  check_state(p.arch, state);
  if (p.theta.size() != p.arch.policy_param_count()) throw ShapeMismatch("theta size does not match architecture");
  const auto m = static_cast<std::size_t>(p.arch.points_per_element * p.arch.in_channels);
  const std::size_t n_el = state.size() / m;
  ActionDistribution d;
  d.mu.resize(n_el);
  d.log_std = p.log_std();
  if (tape) {
    tape->elements.assign(n_el, {});
    tape->trunk_out.assign(n_el, 0.0);
  }
  for (std::size_t e = 0; e < n_el; ++e) {
    d.mu[e] = trunk_forward(p.arch, p.theta, state.subspan(e * m, m), tape ? &tape->elements[e] : nullptr);
    if (tape) tape->trunk_out[e] = d.mu[e];
  }
  return d;
}

double value_forward(const PolicyParams& p, std::span<const double> state, Tape* tape) {
  check_state(p.arch, state);
  if (p.value_params.size() != p.arch.value_param_count()) {
    throw ShapeMismatch("value params size does not match architecture");
  }
  const auto m = static_cast<std::size_t>(p.arch.points_per_element * p.arch.in_channels);
  const std::size_t n_el = state.size() / m;
  if (tape) {
    tape->elements.assign(n_el, {});
    tape->trunk_out.assign(n_el, 0.0);
  }
  double mean = 0.0;
  for (std::size_t e = 0; e < n_el; ++e) {
    const double h = trunk_forward(p.arch, p.value_params, state.subspan(e * m, m), tape ? &tape->elements[e] : nullptr);
    if (tape) tape->trunk_out[e] = h;
    mean += h;
  }
  mean /= static_cast<double>(n_el);
  const std::size_t head = p.value_params.size() - 2;
  return p.value_params[head] * mean + p.value_params[head + 1];
}

void policy_backward(const PolicyParams& p, const Tape& tape, std::span<const double> dloss_dmu, double dloss_dlog_std,
                     std::span<double> grad_theta) {
  if (dloss_dmu.size() != tape.elements.size()) throw ShapeMismatch("dmu does not match recorded elements");
  if (grad_theta.size() != p.theta.size()) throw ShapeMismatch("gradient buffer size");
  for (std::size_t e = 0; e < tape.elements.size(); ++e) {
    if (dloss_dmu[e] != 0.0) trunk_backward(p.arch, p.theta, tape.elements[e], dloss_dmu[e], grad_theta);
  }
  grad_theta.back() += dloss_dlog_std;
}

void value_backward(const PolicyParams& p, const Tape& tape, double dloss_dvalue, std::span<double> grad_value) {
  if (grad_value.size() != p.value_params.size()) throw ShapeMismatch("gradient buffer size");
  const std::size_t n_el = tape.elements.size();
  const std::size_t head = p.value_params.size() - 2;
  const double mean = std::accumulate(tape.trunk_out.begin(), tape.trunk_out.end(), 0.0) / static_cast<double>(n_el);
  grad_value[head] += dloss_dvalue * mean;
  grad_value[head + 1] += dloss_dvalue;
  const double dh = dloss_dvalue * p.value_params[head] / static_cast<double>(n_el);
  for (std::size_t e = 0; e < n_el; ++e) trunk_backward(p.arch, p.value_params, tape.elements[e], dh, grad_value);
}

// --- Distribution -----------------------------------------------------------

double squash(double z) { return kActionScale * sigmoid(z); }

double unsquash(double a) {
  if (!(a > 0.0 && a < kActionScale)) throw OutOfSupport("action " + std::to_string(a) + " outside (0, 0.5)");
  return std::log(a) - std::log(kActionScale - a);
}

namespace {
double log_prob_z(const ActionDistribution& d, std::span<const double> z) {
  const double inv_std = std::exp(-d.log_std);
  double lp = 0.0;
  for (std::size_t e = 0; e < z.size(); ++e) {
    const double t = (z[e] - d.mu[e]) * inv_std;
    lp += -0.5 * t * t - d.log_std - kHalfLog2Pi - log_abs_jacobian(z[e]);
  }
  return lp;
}
}  // namespace

SampledAction sample_action(const ActionDistribution& dist, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::exp(dist.log_std);
  std::vector<double> z(dist.mu.size());
  SampledAction out;
  out.action.resize(dist.mu.size());
  for (std::size_t e = 0; e < z.size(); ++e) {
    z[e] = std::clamp(dist.mu[e] + sd * normal(rng), -kPreSquashClamp, kPreSquashClamp);
    out.action[e] = squash(z[e]);
  }
  out.log_prob = log_prob_z(dist, z);
  return out;
}

std::vector<double> deterministic_action(const ActionDistribution& dist) {
  std::vector<double> a(dist.mu.size());
  std::transform(dist.mu.begin(), dist.mu.end(), a.begin(), squash);
  return a;
}

double log_prob_of(const ActionDistribution& dist, std::span<const double> action) {
  if (action.size() != dist.mu.size()) throw ShapeMismatch("action length differs from element count");
  std::vector<double> z(action.size());
  std::transform(action.begin(), action.end(), z.begin(), unsquash);
  return log_prob_z(dist, z);
}

LogProbGrad log_prob_grad(const ActionDistribution& dist, std::span<const double> action) {
  if (action.size() != dist.mu.size()) throw ShapeMismatch("action length differs from element count");
  LogProbGrad g;
  g.dmu.resize(action.size());
  const double inv_var = std::exp(-2.0 * dist.log_std);
  for (std::size_t e = 0; e < action.size(); ++e) {
    const double diff = unsquash(action[e]) - dist.mu[e];
    g.dmu[e] = diff * inv_var;
    g.dlog_std += diff * diff * inv_var - 1.0;
  }
  return g;
}

double gaussian_entropy(const ActionDistribution& dist) {
  return static_cast<double>(dist.mu.size()) * (0.5 + kHalfLog2Pi + dist.log_std);
}

// --- Adam -------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, double lr) {
  if (params.size() != grads.size()) throw ShapeMismatch("params and grads differ in length");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size()) throw ShapeMismatch("Adam state does not match params");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

// --- Checkpoints ------------------------------------------------------------
//
//   "RLXP" | version u32 | points_per_element u32 | in_channels u32 | n_layers u32
//   | n_layers x (kind u8 | kernel u32 | filters u32 | padding u8 | activation u8)
//   | iteration i64 | adam steps (policy, value) i64 x 2
//   | tensors: theta, value_params, policy m, policy v, value m, value v

namespace {
constexpr std::array<char, 4> kCheckpointMagic{'R', 'L', 'X', 'P'};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<std::byte> out;
  for (char c : kCheckpointMagic) out.push_back(static_cast<std::byte>(c));
  const auto& arch = ckpt.params.arch;
  wire::put_le<std::uint32_t>(out, Checkpoint::kVersion);
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arch.points_per_element));
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arch.in_channels));
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arch.layers.size()));
  for (const auto& l : arch.layers) {
    out.push_back(static_cast<std::byte>(l.kind));
    wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.kernel));
    wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.filters));
    out.push_back(static_cast<std::byte>(l.padding));
    out.push_back(static_cast<std::byte>(l.activation));
  }
  wire::put_le<std::int64_t>(out, ckpt.iteration);
  wire::put_le<std::int64_t>(out, ckpt.adam_policy.step);
  wire::put_le<std::int64_t>(out, ckpt.adam_value.step);
  auto moments = [](const std::vector<double>& v, std::size_t n) {
    return v.empty() ? std::vector<double>(n, 0.0) : v;
  };
  const auto np = ckpt.params.theta.size(), nv = ckpt.params.value_params.size();
  for (const auto* v : {&ckpt.params.theta, &ckpt.params.value_params}) wire::append_tensor(out, wire::Tensor::from_f64(*v));
  wire::append_tensor(out, wire::Tensor::from_f64(moments(ckpt.adam_policy.m, np)));
  wire::append_tensor(out, wire::Tensor::from_f64(moments(ckpt.adam_policy.v, np)));
  wire::append_tensor(out, wire::Tensor::from_f64(moments(ckpt.adam_value.m, nv)));
  wire::append_tensor(out, wire::Tensor::from_f64(moments(ckpt.adam_value.v, nv)));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  wire::SpanSource src(std::as_bytes(std::span<const char>(raw)));
  wire::FrameReader reader(src);
  std::array<std::byte, 4> magic{};
  src.read(magic);
  if (std::memcmp(magic.data(), kCheckpointMagic.data(), 4) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint file");
  }
  if (reader.read_int<std::uint32_t>() != Checkpoint::kVersion) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint c;
  auto& arch = c.params.arch;
  arch.points_per_element = static_cast<int>(reader.read_int<std::uint32_t>());
  arch.in_channels = static_cast<int>(reader.read_int<std::uint32_t>());
  const auto n_layers = reader.read_int<std::uint32_t>();
  if (n_layers > 64) throw std::runtime_error("implausible layer count in checkpoint");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(reader.read_u8());
    l.kernel = static_cast<int>(reader.read_int<std::uint32_t>());
    l.filters = static_cast<int>(reader.read_int<std::uint32_t>());
    l.padding = static_cast<Padding>(reader.read_u8());
    l.activation = static_cast<Activation>(reader.read_u8());
    arch.layers.push_back(l);
  }
  arch.validate();
  c.iteration = reader.read_int<std::int64_t>();
  c.adam_policy.step = reader.read_int<std::int64_t>();
  c.adam_value.step = reader.read_int<std::int64_t>();
  c.params.theta = reader.read_tensor().to_f64();
  c.params.value_params = reader.read_tensor().to_f64();
  c.adam_policy.m = reader.read_tensor().to_f64();
  c.adam_policy.v = reader.read_tensor().to_f64();
  c.adam_value.m = reader.read_tensor().to_f64();
  c.adam_value.v = reader.read_tensor().to_f64();
  if (c.params.theta.size() != arch.policy_param_count() || c.params.value_params.size() != arch.value_param_count() ||
      c.adam_policy.m.size() != c.params.theta.size() || c.adam_value.m.size() != c.params.value_params.size()) {
    throw std::runtime_error("checkpoint tensors do not match the architecture");
  }
  return c;
}

}  // namespace rlx::nn
