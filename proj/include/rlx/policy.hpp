// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace rlx::nn {

class ShapeMismatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
class OutOfSupport : public std::domain_error {
  using std::domain_error::domain_error;
};

enum class LayerKind : std::uint8_t { Conv1D = 0, ScaleSigmoid = 1, Dense = 2 };
enum class Padding : std::uint8_t { Zero = 0, None = 1 };
enum class Activation : std::uint8_t { ReLU = 0, None = 1 };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv1D;
  int kernel = 1;
  int filters = 1;
  Padding padding = Padding::None;
  Activation activation = Activation::None;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-element convolutional trunk. Every element of the state is fed through
/// the same weights; the trunk reduces m samples to one scalar.
struct NetArchitecture {
  int points_per_element = 6;
  int in_channels = 1;
  std::vector<LayerSpec> layers;

  /// Conv(3, 8, zero, ReLU) -> Conv(3, 8, none, ReLU) -> Conv(m-2, 1, none) -> 0.5 sigmoid.
  static NetArchitecture policy_default(int points_per_element);

  void validate() const;
  std::size_t trunk_param_count() const;
  /// Trunk plus the state-independent log_std.
  std::size_t policy_param_count() const { return trunk_param_count() + 1; }
  /// Trunk plus a scalar linear head (weight, bias).
  std::size_t value_param_count() const { return trunk_param_count() + 2; }

  friend bool operator==(const NetArchitecture&, const NetArchitecture&) = default;
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kActionScale = 0.5;

struct PolicyParams {
  NetArchitecture arch;
  std::vector<double> theta;         // trunk weights, then log_std
  std::vector<double> value_params;  // trunk weights, then head weight and bias

  double log_std() const { return theta.back(); }
  double& log_std() { return theta.back(); }
};

/// Orthogonal init: gain sqrt(2) on ReLU layers, 0.01 on the policy output layer; zero biases.
PolicyParams init_params(const NetArchitecture& arch, std::uint64_t seed, double log_std_init = -1.0);

/// Squashed Gaussian: z ~ N(mu, exp(log_std)) per element, a = 0.5 sigmoid(z).
struct ActionDistribution {
  std::vector<double> mu;
  double log_std = -1.0;
};

struct TrunkTape {
  // Per layer: input activations (channels x length) and pre-activation output.
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;
};

/// Forward record for one state: one trunk tape per element.
struct Tape {
  std::vector<TrunkTape> elements;
  std::vector<double> trunk_out;
};

/// Scalar trunk output for one element input of length m.
double trunk_forward(const NetArchitecture& arch, std::span<const double> weights, std::span<const double> input,
                     TrunkTape* tape = nullptr);
/// Accumulates d(out)/d(weights) * dout into grad.
void trunk_backward(const NetArchitecture& arch, std::span<const double> weights, const TrunkTape& tape, double dout,
                    std::span<double> grad);

ActionDistribution policy_forward(const PolicyParams& p, std::span<const double> state, Tape* tape = nullptr);
double value_forward(const PolicyParams& p, std::span<const double> state, Tape* tape = nullptr);

/// Gradient of a loss w.r.t. theta given dL/dmu (per element) and dL/dlog_std; accumulates.
void policy_backward(const PolicyParams& p, const Tape& tape, std::span<const double> dloss_dmu,
                     double dloss_dlog_std, std::span<double> grad_theta);
/// Gradient of a loss w.r.t. value_params given dL/dV; accumulates.
void value_backward(const PolicyParams& p, const Tape& tape, double dloss_dvalue, std::span<double> grad_value);

struct SampledAction {
  std::vector<double> action;
  double log_prob = 0.0;
};

inline constexpr double kPreSquashClamp = 20.0;

double squash(double z);
/// Inverse of squash; OutOfSupport unless 0 < a < 0.5.
double unsquash(double a);

SampledAction sample_action(const ActionDistribution& dist, std::mt19937_64& rng);
std::vector<double> deterministic_action(const ActionDistribution& dist);
double log_prob_of(const ActionDistribution& dist, std::span<const double> action);

struct LogProbGrad {
  std::vector<double> dmu;
  double dlog_std = 0.0;
};
/// d log_prob / d(mu, log_std) at a fixed action.
LogProbGrad log_prob_grad(const ActionDistribution& dist, std::span<const double> action);

/// Entropy of the pre-squash Gaussian, summed over elements.
double gaussian_entropy(const ActionDistribution& dist);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  PolicyParams params;
  AdamState adam_policy;
  AdamState adam_value;
  std::int64_t iteration = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rlx::nn
