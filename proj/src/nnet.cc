#include "nesppo/nnet.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace nesppo {

namespace {

std::string layer_prefix(std::size_t l) { return "l" + std::to_string(l) + "."; }

bool is_sigma_block(const Block& b) {
  return b.name.find(".sigma_") != std::string::npos;
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kRelu:
      return z > 0.0 ? z : 0.0;
  }
  return z;
}

// Derivative expressed through the pre-activation z and the output y.
double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kRelu:
      return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

}  // namespace

std::string_view to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kPlain:
      return "plain";
    case LayerKind::kNoisyIndependent:
      return "noisy-independent";
    case LayerKind::kNoisyFactorized:
      return "noisy-factorized";
  }
  return "?";
}

std::string_view to_string(HeadKind h) {
  switch (h) {
    case HeadKind::kCategorical:
      return "categorical";
    case HeadKind::kGaussian:
      return "gaussian";
    case HeadKind::kValue:
      return "value";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

LayerKind parse_layer_kind(std::string_view s) {
  if (s == "plain") return LayerKind::kPlain;
  if (s == "noisy-independent") return LayerKind::kNoisyIndependent;
  if (s == "noisy-factorized") return LayerKind::kNoisyFactorized;
  throw ConfigError("unknown layer kind '" + std::string(s) + "'");
}

HeadKind parse_head_kind(std::string_view s) {
  if (s == "categorical") return HeadKind::kCategorical;
  if (s == "gaussian") return HeadKind::kGaussian;
  if (s == "value") return HeadKind::kValue;
  throw ConfigError("unknown head kind '" + std::string(s) + "'");
}

NetSpec NetSpec::mlp(std::size_t inputs, std::vector<std::size_t> hidden,
                     std::size_t outputs, HeadKind head, LayerKind kind,
                     Activation activation) {
  NetSpec spec;
  spec.layer_sizes.push_back(inputs);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(outputs);
  spec.activations.assign(hidden.size(), activation);
  spec.layer_kinds.assign(spec.num_layers(), kind);
  spec.head = head;
  return spec;
}

bool NetSpec::has_noisy_layers() const {
  return std::any_of(layer_kinds.begin(), layer_kinds.end(), is_noisy);
}

void NetSpec::validate() const {
  if (layer_sizes.size() < 3) {
    throw ConfigError("network needs at least one hidden layer, got " +
                      std::to_string(layer_sizes.size()) + " layer sizes");
  }
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (layer_sizes[i] == 0) {
      throw ConfigError("layer_sizes[" + std::to_string(i) + "] is zero");
    }
  }
  if (activations.size() != layer_sizes.size() - 2) {
    throw ConfigError("expected " + std::to_string(layer_sizes.size() - 2) +
                      " activations, got " + std::to_string(activations.size()));
  }
  if (layer_kinds.size() != num_layers()) {
    throw ConfigError("expected " + std::to_string(num_layers()) +
                      " layer kinds, got " + std::to_string(layer_kinds.size()));
  }
  if (head == HeadKind::kCategorical && output_size() < 2) {
    throw ConfigError("categorical head needs at least two outputs");
  }
  if (head == HeadKind::kValue && output_size() != 1) {
    throw ConfigError("value head must have exactly one output");
  }
}

NetSpec with_layer_kind(NetSpec spec, LayerKind kind) {
  spec.layer_kinds.assign(spec.num_layers(), kind);
  return spec;
}

ParamVector::ParamVector(std::vector<Block> layout) : layout_(std::move(layout)) {
  std::size_t expected = 0;
  for (const auto& b : layout_) {
    if (b.offset != expected) {
      throw ShapeError("block '" + b.name + "' starts at " +
                       std::to_string(b.offset) + ", expected " +
                       std::to_string(expected));
    }
    expected += b.length;
  }
  data_.assign(expected, 0.0);
}

ParamVector::ParamVector(std::vector<Block> layout, std::vector<double> data)
    : ParamVector(std::move(layout)) {
  if (data.size() != data_.size()) {
    throw ShapeError("parameter payload has " + std::to_string(data.size()) +
                     " values, layout declares " + std::to_string(data_.size()));
  }
  data_ = std::move(data);
}

const Block* ParamVector::find(std::string_view name) const {
  for (const auto& b : layout_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::span<double> ParamVector::block(std::string_view name) {
  const Block* b = find(name);
  if (b == nullptr) throw ShapeError("no parameter block '" + std::string(name) + "'");
  return std::span<double>(data_).subspan(b->offset, b->length);
}

std::span<const double> ParamVector::block(std::string_view name) const {
  const Block* b = find(name);
  if (b == nullptr) throw ShapeError("no parameter block '" + std::string(name) + "'");
  return std::span<const double>(data_).subspan(b->offset, b->length);
}

std::vector<Block> make_layout(const NetSpec& spec) {
  spec.validate();
  std::vector<Block> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t length) {
    layout.push_back({std::move(name), offset, length});
    offset += length;
  };
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t n = spec.layer_sizes[l];
    const std::size_t m = spec.layer_sizes[l + 1];
    const std::string p = layer_prefix(l);
    if (is_noisy(spec.layer_kinds[l])) {
      add(p + "mu_w", n * m);
      add(p + "sigma_w", n * m);
      add(p + "mu_b", m);
      add(p + "sigma_b", m);
    } else {
      add(p + "w", n * m);
      add(p + "b", m);
    }
  }
  if (spec.head == HeadKind::kGaussian) add("log_std", spec.output_size());
  return layout;
}

ParamVector init_params(const NetSpec& spec, RngStream& rng) {
  ParamVector params = make_params(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double n = static_cast<double>(spec.layer_sizes[l]);
    const std::string p = layer_prefix(l);
    double bound = std::sqrt(1.0 / n);
    std::span<double> w, b;
    switch (spec.layer_kinds[l]) {
      case LayerKind::kPlain:
        w = params.block(p + "w");
        b = params.block(p + "b");
        break;
      case LayerKind::kNoisyIndependent:
        bound = std::sqrt(3.0 / n);
        [[fallthrough]];
      case LayerKind::kNoisyFactorized:
        w = params.block(p + "mu_w");
        b = params.block(p + "mu_b");
        break;
    }
    for (double& v : w) v = rng.uniform(-bound, bound);
    for (double& v : b) v = rng.uniform(-bound, bound);
  }
  init_sigma_blocks(spec, params);
  return params;
}

void init_sigma_blocks(const NetSpec& spec, ParamVector& params) {
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerKind kind = spec.layer_kinds[l];
    if (!is_noisy(kind)) continue;
    const double n = static_cast<double>(spec.layer_sizes[l]);
    const double sigma = kind == LayerKind::kNoisyIndependent
                             ? kIndependentSigmaInit
                             : kFactorizedSigma0 / std::sqrt(n);
    const std::string p = layer_prefix(l);
    std::ranges::fill(params.block(p + "sigma_w"), sigma);
    std::ranges::fill(params.block(p + "sigma_b"), sigma);
  }
}

void clamp_sigma_blocks(ParamVector& params) {
  auto data = params.data();
  for (const auto& b : params.layout()) {
    if (!is_sigma_block(b)) continue;
    for (std::size_t i = b.offset; i < b.offset + b.length; ++i) {
      data[i] = std::max(data[i], 0.0);
    }
  }
}

void zero_sigma_blocks(ParamVector& params) {
  auto data = params.data();
  for (const auto& b : params.layout()) {
    if (!is_sigma_block(b)) continue;
    std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(b.offset), b.length, 0.0);
  }
}

double mean_sigma(const ParamVector& params) {
  double sum = 0.0;
  std::size_t count = 0;
  const auto data = params.data();
  for (const auto& b : params.layout()) {
    if (!is_sigma_block(b)) continue;
    for (std::size_t i = b.offset; i < b.offset + b.length; ++i) sum += std::abs(data[i]);
    count += b.length;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double f_scale(double x) {
  if (x == 0.0) return 0.0;
  return x > 0.0 ? std::sqrt(x) : -std::sqrt(-x);
}

std::size_t LayerNoise::draw_count() const {
  if (mode == LayerKind::kNoisyFactorized) {
    return eps_in.size() + eps_out.size() + eps_out_bias.size();
  }
  return eps_w.size() + eps_b.size();
}

LayerNoise factorized_noise(std::vector<double> eps_in, std::vector<double> eps_out,
                            std::vector<double> eps_out_bias) {
  if (eps_out.size() != eps_out_bias.size()) {
    throw ShapeError("factorized bias noise length differs from output noise length");
  }
  LayerNoise noise;
  noise.mode = LayerKind::kNoisyFactorized;
  noise.inputs = eps_in.size();
  noise.outputs = eps_out.size();
  noise.eps_w.resize(noise.inputs * noise.outputs);
  noise.eps_b.resize(noise.outputs);
  for (std::size_t j = 0; j < noise.outputs; ++j) {
    const double fj = f_scale(eps_out[j]);
    for (std::size_t i = 0; i < noise.inputs; ++i) {
      noise.eps_w[j * noise.inputs + i] = f_scale(eps_in[i]) * fj;
    }
    noise.eps_b[j] = f_scale(eps_out_bias[j]);
  }
  noise.eps_in = std::move(eps_in);
  noise.eps_out = std::move(eps_out);
  noise.eps_out_bias = std::move(eps_out_bias);
  return noise;
}

NoiseDraw sample_noise(const NetSpec& spec, RngStream& rng) {
  if (!spec.has_noisy_layers()) {
    throw ConfigError("sample_noise called on a network without noisy layers");
  }
  NoiseDraw draw;
  draw.layers.resize(spec.num_layers());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerKind kind = spec.layer_kinds[l];
    if (!is_noisy(kind)) continue;
    const std::size_t n = spec.layer_sizes[l];
    const std::size_t m = spec.layer_sizes[l + 1];
    if (kind == LayerKind::kNoisyIndependent) {
      LayerNoise noise;
      noise.mode = kind;
      noise.inputs = n;
      noise.outputs = m;
      noise.eps_w = rng.gaussian(n * m);
      noise.eps_b = rng.gaussian(m);
      draw.layers[l] = std::move(noise);
    } else {
      auto eps_in = rng.gaussian(n);
      auto eps_out = rng.gaussian(m);
      auto eps_out_bias = rng.gaussian(m);
      draw.layers[l] = factorized_noise(std::move(eps_in), std::move(eps_out),
                                        std::move(eps_out_bias));
    }
  }
  return draw;
}

NoiseDraw zero_noise(const NetSpec& spec) {
  NoiseDraw draw;
  draw.layers.resize(spec.num_layers());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerKind kind = spec.layer_kinds[l];
    if (!is_noisy(kind)) continue;
    const std::size_t n = spec.layer_sizes[l];
    const std::size_t m = spec.layer_sizes[l + 1];
    if (kind == LayerKind::kNoisyFactorized) {
      draw.layers[l] = factorized_noise(std::vector<double>(n, 0.0),
                                        std::vector<double>(m, 0.0),
                                        std::vector<double>(m, 0.0));
    } else {
      LayerNoise noise;
      noise.mode = kind;
      noise.inputs = n;
      noise.outputs = m;
      noise.eps_w.assign(n * m, 0.0);
      noise.eps_b.assign(m, 0.0);
      draw.layers[l] = std::move(noise);
    }
  }
  return draw;
}

ResolvedNet::ResolvedNet(const NetSpec& spec, const ParamVector& params,
                         const NoiseDraw* noise)
    : spec_(spec) {
  spec_.validate();
  if (spec_.has_noisy_layers()) {
    if (noise == nullptr) throw ConfigError("noisy network evaluated without a noise draw");
    if (noise->layers.size() != spec_.num_layers()) {
      throw ShapeError("noise draw covers " + std::to_string(noise->layers.size()) +
                       " layers, network has " + std::to_string(spec_.num_layers()));
    }
  }
  layers_.resize(spec_.num_layers());
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    Layer& layer = layers_[l];
    layer.inputs = spec_.layer_sizes[l];
    layer.outputs = spec_.layer_sizes[l + 1];
    layer.kind = spec_.layer_kinds[l];
    const std::string p = layer_prefix(l);
    const std::size_t nw = layer.inputs * layer.outputs;
    if (!is_noisy(layer.kind)) {
      const Block* w = params.find(p + "w");
      const Block* b = params.find(p + "b");
      if (w == nullptr || b == nullptr || w->length != nw || b->length != layer.outputs) {
        throw ShapeError("parameter layout does not match layer " + std::to_string(l));
      }
      layer.w_offset = w->offset;
      layer.b_offset = b->offset;
      auto pw = params.block(p + "w");
      auto pb = params.block(p + "b");
      layer.w.assign(pw.begin(), pw.end());
      layer.b.assign(pb.begin(), pb.end());
      continue;
    }
    const auto& slot = noise->layers[l];
    if (!slot || slot->inputs != layer.inputs || slot->outputs != layer.outputs ||
        slot->mode != layer.kind) {
      throw ShapeError("noise draw does not match noisy layer " + std::to_string(l));
    }
    layer.noise = &*slot;
    const Block* mu_w = params.find(p + "mu_w");
    const Block* sigma_w = params.find(p + "sigma_w");
    const Block* mu_b = params.find(p + "mu_b");
    const Block* sigma_b = params.find(p + "sigma_b");
    if (mu_w == nullptr || sigma_w == nullptr || mu_b == nullptr || sigma_b == nullptr ||
        mu_w->length != nw || mu_b->length != layer.outputs) {
      throw ShapeError("parameter layout does not match noisy layer " + std::to_string(l));
    }
    layer.w_offset = mu_w->offset;
    layer.b_offset = mu_b->offset;
    layer.sigma_w_offset = sigma_w->offset;
    layer.sigma_b_offset = sigma_b->offset;
    const auto data = params.data();
    layer.w.resize(nw);
    layer.b.resize(layer.outputs);
    for (std::size_t k = 0; k < nw; ++k) {
      layer.w[k] = data[mu_w->offset + k] + data[sigma_w->offset + k] * slot->eps_w[k];
    }
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      layer.b[j] = data[mu_b->offset + j] + data[sigma_b->offset + j] * slot->eps_b[j];
    }
  }
}

ForwardResult ResolvedNet::forward(std::span<const double> obs) const {
  if (obs.size() != spec_.input_size()) {
    throw ShapeError("observation has " + std::to_string(obs.size()) +
                     " values, network expects " + std::to_string(spec_.input_size()));
  }
  ForwardResult result;
  result.cache.inputs.reserve(layers_.size());
  result.cache.pre.reserve(layers_.size());
  std::vector<double> x(obs.begin(), obs.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    std::vector<double> z(layer.outputs);
    matvec(layer.w, layer.outputs, layer.inputs, x, z);
    for (std::size_t j = 0; j < layer.outputs; ++j) z[j] += layer.b[j];
    result.cache.inputs.push_back(std::move(x));
    if (l + 1 < layers_.size()) {
      x.resize(layer.outputs);
      for (std::size_t j = 0; j < layer.outputs; ++j) {
        x[j] = activate(spec_.activations[l], z[j]);
      }
    } else {
      result.outputs = z;
    }
    result.cache.pre.push_back(std::move(z));
  }
  return result;
}

void ResolvedNet::backward(const ForwardCache& cache, std::span<const double> grad_out,
                           ParamVector& grad) const {
  if (cache.inputs.size() != layers_.size() || cache.pre.size() != layers_.size()) {
    throw ShapeError("forward cache does not match the network depth");
  }
  if (grad_out.size() != spec_.output_size()) {
    throw ShapeError("output gradient has " + std::to_string(grad_out.size()) +
                     " values, network has " + std::to_string(spec_.output_size()) +
                     " outputs");
  }
  auto gdata = grad.data();
  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    const auto& x = cache.inputs[li];
    if (x.size() != layer.inputs || g.size() != layer.outputs) {
      throw ShapeError("forward cache does not match layer " + std::to_string(li));
    }
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      const double gj = g[j];
      double* dw = gdata.data() + layer.w_offset + j * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) dw[i] += gj * x[i];
      gdata[layer.b_offset + j] += gj;
    }
    if (layer.noise != nullptr) {
      // theta = mu + sigma * eps, so dL/dsigma = dL/dtheta * eps.
      const auto& eps_w = layer.noise->eps_w;
      const auto& eps_b = layer.noise->eps_b;
      for (std::size_t j = 0; j < layer.outputs; ++j) {
        const double gj = g[j];
        double* ds = gdata.data() + layer.sigma_w_offset + j * layer.inputs;
        const double* e = eps_w.data() + j * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) ds[i] += gj * x[i] * e[i];
        gdata[layer.sigma_b_offset + j] += gj * eps_b[j];
      }
    }
    if (li == 0) break;
    // Propagate to the previous layer's pre-activation.
    std::vector<double> dx(layer.inputs, 0.0);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      const double gj = g[j];
      const double* row = layer.w.data() + j * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) dx[i] += row[i] * gj;
    }
    const auto& z_prev = cache.pre[li - 1];
    for (std::size_t i = 0; i < layer.inputs; ++i) {
      dx[i] *= activate_grad(spec_.activations[li - 1], z_prev[i], x[i]);
    }
    g = std::move(dx);
  }
}

ForwardResult forward(const NetSpec& spec, const ParamVector& params,
                      const NoiseDraw* noise, std::span<const double> obs) {
  return ResolvedNet(spec, params, noise).forward(obs);
}

ParamVector backward(const NetSpec& spec, const ParamVector& params,
                     const NoiseDraw* noise, const ForwardCache& cache,
                     std::span<const double> grad_out) {
  ParamVector grad = params.zeros_like();
  ResolvedNet(spec, params, noise).backward(cache, grad_out, grad);
  return grad;
}

std::size_t PolicyDist::action_dim() const {
  return head == HeadKind::kCategorical ? probs.size() : mean.size();
}

PolicyDist categorical_dist(std::span<const double> logits) {
  PolicyDist dist;
  dist.head = HeadKind::kCategorical;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - shift);
  const double log_total = std::log(total);
  dist.log_probs.resize(logits.size());
  dist.probs.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    dist.log_probs[k] = logits[k] - shift - log_total;
    dist.probs[k] = std::exp(dist.log_probs[k]);
  }
  return dist;
}

PolicyDist gaussian_dist(std::vector<double> mean, std::vector<double> log_std) {
  if (mean.size() != log_std.size()) {
    throw ShapeError("gaussian mean has " + std::to_string(mean.size()) +
                     " dims, log_std has " + std::to_string(log_std.size()));
  }
  PolicyDist dist;
  dist.head = HeadKind::kGaussian;
  dist.stddev.resize(log_std.size());
  for (std::size_t d = 0; d < log_std.size(); ++d) dist.stddev[d] = std::exp(log_std[d]);
  dist.mean = std::move(mean);
  dist.log_std = std::move(log_std);
  return dist;
}

PolicyDist dist_from_outputs(const NetSpec& spec, std::span<const double> outputs,
                             const ParamVector& params) {
  if (outputs.size() != spec.output_size()) {
    throw ShapeError("network output has " + std::to_string(outputs.size()) +
                     " values, spec declares " + std::to_string(spec.output_size()));
  }
  switch (spec.head) {
    case HeadKind::kCategorical:
      return categorical_dist(outputs);
    case HeadKind::kGaussian: {
      auto log_std = params.block("log_std");
      return gaussian_dist({outputs.begin(), outputs.end()}, {log_std.begin(), log_std.end()});
    }
    case HeadKind::kValue:
      break;
  }
  throw ConfigError("value head has no action distribution");
}

namespace {

std::size_t checked_index(const PolicyDist& dist, const Action& action) {
  const auto* index = std::get_if<std::size_t>(&action);
  if (index == nullptr) throw ShapeError("categorical policy given a continuous action");
  if (*index >= dist.probs.size()) {
    throw ShapeError("action " + std::to_string(*index) + " out of range for " +
                     std::to_string(dist.probs.size()) + " choices");
  }
  return *index;
}

const std::vector<double>& checked_vector(const PolicyDist& dist, const Action& action) {
  const auto* values = std::get_if<std::vector<double>>(&action);
  if (values == nullptr) throw ShapeError("gaussian policy given a discrete action");
  if (values->size() != dist.mean.size()) {
    throw ShapeError("action has " + std::to_string(values->size()) +
                     " dims, policy has " + std::to_string(dist.mean.size()));
  }
  return *values;
}

void check_same_head(const PolicyDist& p, const PolicyDist& q) {
  if (p.head != q.head || p.action_dim() != q.action_dim()) {
    throw ShapeError("distributions differ in head kind or dimension");
  }
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 ln(2 pi)

}  // namespace

double log_prob(const PolicyDist& dist, const Action& action) {
  if (dist.head == HeadKind::kCategorical) {
    return dist.log_probs[checked_index(dist, action)];
  }
  const auto& a = checked_vector(dist, action);
  double total = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double u = (a[d] - dist.mean[d]) / dist.stddev[d];
    total += -0.5 * u * u - dist.log_std[d] - kHalfLog2Pi;
  }
  return total;
}

double kl(const PolicyDist& p, const PolicyDist& q) {
  check_same_head(p, q);
  double total = 0.0;
  if (p.head == HeadKind::kCategorical) {
    for (std::size_t k = 0; k < p.probs.size(); ++k) {
      if (p.probs[k] > 0.0) total += p.probs[k] * (p.log_probs[k] - q.log_probs[k]);
    }
    return total;
  }
  for (std::size_t d = 0; d < p.mean.size(); ++d) {
    const double diff = p.mean[d] - q.mean[d];
    const double var_q = q.stddev[d] * q.stddev[d];
    total += q.log_std[d] - p.log_std[d] +
             (p.stddev[d] * p.stddev[d] + diff * diff) / (2.0 * var_q) - 0.5;
  }
  return total;
}

double entropy(const PolicyDist& dist) {
  double total = 0.0;
  if (dist.head == HeadKind::kCategorical) {
    for (std::size_t k = 0; k < dist.probs.size(); ++k) {
      if (dist.probs[k] > 0.0) total -= dist.probs[k] * dist.log_probs[k];
    }
    return total;
  }
  for (double ls : dist.log_std) total += ls + 0.5 + kHalfLog2Pi;
  return total;
}

Action sample_action(const PolicyDist& dist, RngStream& rng) {
  if (dist.head == HeadKind::kCategorical) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t k = 0; k < dist.probs.size(); ++k) {
      cumulative += dist.probs[k];
      if (u < cumulative) return k;
    }
    return dist.probs.size() - 1;
  }
  const auto noise = rng.gaussian(dist.mean.size());
  std::vector<double> a(dist.mean.size());
  for (std::size_t d = 0; d < a.size(); ++d) a[d] = dist.mean[d] + dist.stddev[d] * noise[d];
  return a;
}

Action greedy_action(const PolicyDist& dist) {
  if (dist.head == HeadKind::kCategorical) {
    return static_cast<std::size_t>(
        std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
  }
  return dist.mean;
}

DistGrad log_prob_grad(const PolicyDist& dist, const Action& action) {
  DistGrad grad;
  if (dist.head == HeadKind::kCategorical) {
    const std::size_t a = checked_index(dist, action);
    grad.d_outputs.resize(dist.probs.size());
    for (std::size_t k = 0; k < dist.probs.size(); ++k) {
      grad.d_outputs[k] = (k == a ? 1.0 : 0.0) - dist.probs[k];
    }
    return grad;
  }
  const auto& a = checked_vector(dist, action);
  grad.d_outputs.resize(a.size());
  grad.d_log_std.resize(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double u = (a[d] - dist.mean[d]) / dist.stddev[d];
    grad.d_outputs[d] = u / dist.stddev[d];
    grad.d_log_std[d] = u * u - 1.0;
  }
  return grad;
}

DistGrad kl_grad_q(const PolicyDist& p, const PolicyDist& q) {
  check_same_head(p, q);
  DistGrad grad;
  if (p.head == HeadKind::kCategorical) {
    grad.d_outputs.resize(p.probs.size());
    for (std::size_t k = 0; k < p.probs.size(); ++k) {
      grad.d_outputs[k] = q.probs[k] - p.probs[k];
    }
    return grad;
  }
  grad.d_outputs.resize(p.mean.size());
  grad.d_log_std.resize(p.mean.size());
  for (std::size_t d = 0; d < p.mean.size(); ++d) {
    const double diff = p.mean[d] - q.mean[d];
    const double var_q = q.stddev[d] * q.stddev[d];
    grad.d_outputs[d] = -diff / var_q;
    grad.d_log_std[d] = 1.0 - (p.stddev[d] * p.stddev[d] + diff * diff) / var_q;
  }
  return grad;
}

}  // namespace nesppo
