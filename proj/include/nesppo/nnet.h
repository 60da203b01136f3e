#ifndef NESPPO_NNET_H_
#define NESPPO_NNET_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nesppo/numerics.h"

namespace nesppo {

enum class Activation { kTanh, kRelu };
enum class LayerKind { kPlain, kNoisyIndependent, kNoisyFactorized };
// kValue is a bare scalar output (critic); it has no action distribution.
enum class HeadKind { kCategorical, kGaussian, kValue };

std::string_view to_string(Activation a);
std::string_view to_string(LayerKind k);
std::string_view to_string(HeadKind h);
Activation parse_activation(std::string_view s);
LayerKind parse_layer_kind(std::string_view s);
HeadKind parse_head_kind(std::string_view s);

inline bool is_noisy(LayerKind k) { return k != LayerKind::kPlain; }

// Feed-forward architecture. layer_sizes runs from the input width through
// the output width; layer l maps layer_sizes[l] -> layer_sizes[l + 1].
struct NetSpec {
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> activations;  // one per hidden layer
  std::vector<LayerKind> layer_kinds;   // one per linear layer
  HeadKind head = HeadKind::kCategorical;

  // Fully connected net with identical hidden activation and one layer kind
  // applied to every linear layer.
  static NetSpec mlp(std::size_t inputs, std::vector<std::size_t> hidden,
                     std::size_t outputs, HeadKind head,
                     LayerKind kind = LayerKind::kPlain,
                     Activation activation = Activation::kTanh);

  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  bool has_noisy_layers() const;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// Same spec with every layer switched to `kind`.
NetSpec with_layer_kind(NetSpec spec, LayerKind kind);

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  friend bool operator==(const Block&, const Block&) = default;
};

// Flat parameter storage plus the named block layout.
//   plain layer l:  "l<l>.w", "l<l>.b"
//   noisy layer l:  "l<l>.mu_w", "l<l>.sigma_w", "l<l>.mu_b", "l<l>.sigma_b"
//   gaussian head:  "log_std"
class ParamVector {
 public:
  ParamVector() = default;
  // Zero-filled storage for `layout`. Throws ShapeError when blocks are not
  // contiguous from offset 0.
  explicit ParamVector(std::vector<Block> layout);
  ParamVector(std::vector<Block> layout, std::vector<double> data);

  std::size_t size() const { return data_.size(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<Block>& layout() const { return layout_; }

  const Block* find(std::string_view name) const;
  std::span<double> block(std::string_view name);
  std::span<const double> block(std::string_view name) const;

  // Same layout, zero data.
  ParamVector zeros_like() const { return ParamVector(layout_); }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<Block> layout_;
  std::vector<double> data_;
};

std::vector<Block> make_layout(const NetSpec& spec);
inline ParamVector make_params(const NetSpec& spec) {
  return ParamVector(make_layout(spec));
}

inline constexpr double kIndependentSigmaInit = 0.0017;
inline constexpr double kFactorizedSigma0 = 0.5;

// Fan-in uniform init; noisy layers follow their own mu/sigma rules.
ParamVector init_params(const NetSpec& spec, RngStream& rng);

// Writes the initial sigma values of every noisy layer without touching
// any other block.
void init_sigma_blocks(const NetSpec& spec, ParamVector& params);
void clamp_sigma_blocks(ParamVector& params);
void zero_sigma_blocks(ParamVector& params);
// Mean |sigma| over every sigma block, 0 when there are none.
double mean_sigma(const ParamVector& params);

// sgn(x) * sqrt(|x|)
double f_scale(double x);

struct LayerNoise {
  LayerKind mode = LayerKind::kNoisyIndependent;
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> eps_w;  // outputs x inputs, row-major
  std::vector<double> eps_b;  // outputs
  // Factorized base noise: eps_w[j][i] = f(eps_in[i]) f(eps_out[j]) and
  // eps_b[j] = f(eps_out_bias[j]).
  std::vector<double> eps_in;
  std::vector<double> eps_out;
  std::vector<double> eps_out_bias;

  // Standard-normal draws this layer consumed: nm + m or n + 2m.
  std::size_t draw_count() const;

  friend bool operator==(const LayerNoise&, const LayerNoise&) = default;
};

// One entry per linear layer; plain layers hold nullopt.
struct NoiseDraw {
  std::vector<std::optional<LayerNoise>> layers;
  friend bool operator==(const NoiseDraw&, const NoiseDraw&) = default;
};

// Builds a factorized layer noise from its base vectors.
LayerNoise factorized_noise(std::vector<double> eps_in,
                            std::vector<double> eps_out,
                            std::vector<double> eps_out_bias);

NoiseDraw sample_noise(const NetSpec& spec, RngStream& rng);
// All-zero noise: the network then behaves as its mu blocks alone.
NoiseDraw zero_noise(const NetSpec& spec);

struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to each linear layer
  std::vector<std::vector<double>> pre;     // pre-activation of each layer
};

struct ForwardResult {
  std::vector<double> outputs;
  ForwardCache cache;
};

// Network with its effective weights (mu + sigma * eps for noisy layers)
// resolved once, so a batch of forward/backward passes shares the work.
class ResolvedNet {
 public:
  ResolvedNet(const NetSpec& spec, const ParamVector& params,
              const NoiseDraw* noise);

  ForwardResult forward(std::span<const double> obs) const;
  // Adds dLoss/dparams into `grad` (layout of the params it was built from).
  void backward(const ForwardCache& cache, std::span<const double> grad_out,
                ParamVector& grad) const;

  const NetSpec& spec() const { return spec_; }

 private:
  struct Layer {
    std::vector<double> w;  // outputs x inputs
    std::vector<double> b;
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    LayerKind kind = LayerKind::kPlain;
    const LayerNoise* noise = nullptr;
    // Offsets of the gradient targets inside the parameter vector.
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
    std::size_t sigma_w_offset = 0;
    std::size_t sigma_b_offset = 0;
  };

  NetSpec spec_;
  std::vector<Layer> layers_;
};

ForwardResult forward(const NetSpec& spec, const ParamVector& params,
                      const NoiseDraw* noise, std::span<const double> obs);
ParamVector backward(const NetSpec& spec, const ParamVector& params,
                     const NoiseDraw* noise, const ForwardCache& cache,
                     std::span<const double> grad_out);

// Discrete index or continuous vector, matching the policy head.
using Action = std::variant<std::size_t, std::vector<double>>;

struct PolicyDist {
  HeadKind head = HeadKind::kCategorical;
  std::vector<double> probs;      // categorical
  std::vector<double> log_probs;  // categorical
  std::vector<double> mean;       // gaussian
  std::vector<double> log_std;    // gaussian
  std::vector<double> stddev;     // gaussian

  std::size_t action_dim() const;
};

PolicyDist dist_from_outputs(const NetSpec& spec, std::span<const double> outputs,
                             const ParamVector& params);
PolicyDist categorical_dist(std::span<const double> logits);
PolicyDist gaussian_dist(std::vector<double> mean, std::vector<double> log_std);

double log_prob(const PolicyDist& dist, const Action& action);
// KL(p || q).
double kl(const PolicyDist& p, const PolicyDist& q);
double entropy(const PolicyDist& dist);

Action sample_action(const PolicyDist& dist, RngStream& rng);
// argmax for categorical, mean for gaussian.
Action greedy_action(const PolicyDist& dist);

// Gradient of a scalar with respect to the distribution's raw parameters:
// the network outputs (logits or mean) and the log_std block.
struct DistGrad {
  std::vector<double> d_outputs;
  std::vector<double> d_log_std;
};

DistGrad log_prob_grad(const PolicyDist& dist, const Action& action);
// Gradient of KL(p || q) with respect to q's parameters.
DistGrad kl_grad_q(const PolicyDist& p, const PolicyDist& q);

}  // namespace nesppo

#endif  // NESPPO_NNET_H_
