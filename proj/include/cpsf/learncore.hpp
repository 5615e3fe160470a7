#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpsf/rng.hpp"

namespace cpsf {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingDivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of 64-bit floats. Everything in the model substrate
// is double precision so trained artifacts are reproducible bit-exactly and
// gradients can be validated against central finite differences.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    data.assign(n, 0.0);
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape); }

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline std::string shape_string(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape.size(); ++i)
    s += (i ? "," : "") + std::to_string(t.shape[i]);
  return s + ")";
}

// y = W x
inline void matvec(const Tensor& w, const std::vector<double>& x, std::vector<double>& y) {
  if (w.cols() != x.size())
    throw ShapeError("matvec: weight " + shape_string(w) + " vs input (" +
                     std::to_string(x.size()) + ")");
  y.assign(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = &w.data[r * w.cols()];
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// y += W x
inline void matvec_acc(const Tensor& w, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = &w.data[r * w.cols()];
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// dx += W^T dy
inline void matvec_transpose_acc(const Tensor& w, const std::vector<double>& dy,
                                 std::vector<double>& dx) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = &w.data[r * w.cols()];
    const double g = dy[r];
    for (std::size_t c = 0; c < w.cols(); ++c) dx[c] += row[c] * g;
  }
}

// G += dy x^T
inline void outer_acc(Tensor& g, const std::vector<double>& dy, const std::vector<double>& x) {
  for (std::size_t r = 0; r < g.rows(); ++r) {
    double* row = &g.data[r * g.cols()];
    const double v = dy[r];
    for (std::size_t c = 0; c < g.cols(); ++c) row[c] += v * x[c];
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Multi-layer perceptron: affine + tanh hidden layers, linear output.
// ---------------------------------------------------------------------------

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
};

struct MlpGrads {
  std::vector<DenseLayer> layers;
};

inline MlpParams make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("make_mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weight = Tensor({dims[l + 1], dims[l]});
    layer.bias = Tensor({dims[l + 1]});
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& w : layer.weight.data) w = rng.uniform(-scale, scale);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline MlpGrads make_mlp_grads(const MlpParams& p) {
  MlpGrads g;
  for (const auto& layer : p.layers)
    g.layers.push_back({Tensor(layer.weight.shape), Tensor(layer.bias.shape)});
  return g;
}

struct MlpCache {
  std::vector<std::vector<double>> activations;  // activations[0] = input
};

inline std::vector<double> mlp_forward(const MlpParams& params, const std::vector<double>& input,
                                       MlpCache* cache = nullptr) {
  if (input.size() != params.input_dim())
    throw ShapeError("mlp_forward: input (" + std::to_string(input.size()) + ") vs expected (" +
                     std::to_string(params.input_dim()) + ")");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  std::vector<double> a = input;
  std::vector<double> z;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    matvec(layer.weight, a, z);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias.data[i];
    if (l + 1 < params.layers.size())
      for (double& v : z) v = std::tanh(v);
    a = z;
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

// Accumulates parameter gradients and returns the input gradient.
inline std::vector<double> mlp_backward(const MlpParams& params, const MlpCache& cache,
                                        const std::vector<double>& d_output, MlpGrads& grads) {
  std::vector<double> dz = d_output;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    if (l + 1 < params.layers.size()) {
      const auto& a = cache.activations[l + 1];
      for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= 1.0 - a[i] * a[i];
    }
    outer_acc(grads.layers[l].weight, dz, cache.activations[l]);
    for (std::size_t i = 0; i < dz.size(); ++i) grads.layers[l].bias.data[i] += dz[i];
    std::vector<double> dx(cache.activations[l].size(), 0.0);
    matvec_transpose_acc(layer.weight, dz, dx);
    dz = std::move(dx);
  }
  return dz;
}

// ---------------------------------------------------------------------------
// Stacked LSTM with a linear head on the final hidden state.
// ---------------------------------------------------------------------------

struct LstmLayer {
  Tensor w_input;   // 4h x in  (gate order: input, forget, cell, output)
  Tensor w_hidden;  // 4h x h
  Tensor bias;      // 4h
};

struct LstmParams {
  std::vector<LstmLayer> layers;
  Tensor head_weight;  // out x h
  Tensor head_bias;    // out
  std::size_t hidden = 0;

  std::size_t input_dim() const { return layers.front().w_input.cols(); }
  std::size_t output_dim() const { return head_weight.rows(); }
};

struct LstmGrads {
  std::vector<LstmLayer> layers;
  Tensor head_weight;
  Tensor head_bias;
};

inline LstmParams make_lstm(std::size_t input_dim, std::size_t hidden, std::size_t num_layers,
                            std::size_t output_dim, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden;
    LstmLayer layer;
    layer.w_input = Tensor({4 * hidden, in});
    layer.w_hidden = Tensor({4 * hidden, hidden});
    layer.bias = Tensor({4 * hidden});
    const double s_in = 1.0 / std::sqrt(static_cast<double>(in));
    const double s_h = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : layer.w_input.data) w = rng.uniform(-s_in, s_in);
    for (double& w : layer.w_hidden.data) w = rng.uniform(-s_h, s_h);
    // forget gate bias starts open
    for (std::size_t i = hidden; i < 2 * hidden; ++i) layer.bias.data[i] = 1.0;
    p.layers.push_back(std::move(layer));
  }
  p.head_weight = Tensor({output_dim, hidden});
  p.head_bias = Tensor({output_dim});
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& w : p.head_weight.data) w = rng.uniform(-s, s);
  return p;
}

inline LstmGrads make_lstm_grads(const LstmParams& p) {
  LstmGrads g;
  for (const auto& layer : p.layers)
    g.layers.push_back(
        {Tensor(layer.w_input.shape), Tensor(layer.w_hidden.shape), Tensor(layer.bias.shape)});
  g.head_weight = Tensor(p.head_weight.shape);
  g.head_bias = Tensor(p.head_bias.shape);
  return g;
}

struct LstmStepCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> gate_i, gate_f, gate_g, gate_o;
  std::vector<double> c, tanh_c, h;
};

struct LstmCache {
  // steps[t][l]
  std::vector<std::vector<LstmStepCache>> steps;
  std::vector<double> final_hidden;
};

// Runs the stacked recurrent cells over the sequence and applies the linear
// head to the final top-layer hidden state.
inline std::vector<double> lstm_forward(const LstmParams& params,
                                        const std::vector<std::vector<double>>& sequence,
                                        LstmCache* cache = nullptr) {
  if (sequence.empty()) throw ShapeError("lstm_forward: empty sequence");
  const std::size_t h = params.hidden;
  const std::size_t num_layers = params.layers.size();

  std::vector<std::vector<double>> hidden(num_layers, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> cell(num_layers, std::vector<double>(h, 0.0));
  if (cache) {
    cache->steps.clear();
    cache->steps.resize(sequence.size());
  }

  std::vector<double> pre(4 * h);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    if (sequence[t].size() != params.input_dim())
      throw ShapeError("lstm_forward: step input (" + std::to_string(sequence[t].size()) +
                       ") vs expected (" + std::to_string(params.input_dim()) + ")");
    const std::vector<double>* x = &sequence[t];
    if (cache) cache->steps[t].resize(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
      const LstmLayer& layer = params.layers[l];
      matvec(layer.w_input, *x, pre);
      matvec_acc(layer.w_hidden, hidden[l], pre);
      for (std::size_t i = 0; i < 4 * h; ++i) pre[i] += layer.bias.data[i];

      LstmStepCache sc;
      sc.x = *x;
      sc.h_prev = hidden[l];
      sc.c_prev = cell[l];
      sc.gate_i.resize(h);
      sc.gate_f.resize(h);
      sc.gate_g.resize(h);
      sc.gate_o.resize(h);
      sc.c.resize(h);
      sc.tanh_c.resize(h);
      sc.h.resize(h);
      for (std::size_t i = 0; i < h; ++i) {
        sc.gate_i[i] = sigmoid(pre[i]);
        sc.gate_f[i] = sigmoid(pre[h + i]);
        sc.gate_g[i] = std::tanh(pre[2 * h + i]);
        sc.gate_o[i] = sigmoid(pre[3 * h + i]);
        sc.c[i] = sc.gate_f[i] * sc.c_prev[i] + sc.gate_i[i] * sc.gate_g[i];
        sc.tanh_c[i] = std::tanh(sc.c[i]);
        sc.h[i] = sc.gate_o[i] * sc.tanh_c[i];
      }
      hidden[l] = sc.h;
      cell[l] = sc.c;
      if (cache)
        cache->steps[t][l] = std::move(sc);
      x = &hidden[l];
    }
  }

  std::vector<double> out;
  matvec(params.head_weight, hidden[num_layers - 1], out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += params.head_bias.data[i];
  if (cache) cache->final_hidden = hidden[num_layers - 1];
  return out;
}

// Backpropagation through time; gradients accumulate into `grads`.
inline void lstm_backward(const LstmParams& params, const LstmCache& cache,
                          const std::vector<double>& d_output, LstmGrads& grads) {
  const std::size_t h = params.hidden;
  const std::size_t num_layers = params.layers.size();
  const std::size_t T = cache.steps.size();

  outer_acc(grads.head_weight, d_output, cache.final_hidden);
  for (std::size_t i = 0; i < d_output.size(); ++i) grads.head_bias.data[i] += d_output[i];

  std::vector<std::vector<double>> dh_time(num_layers, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> dc_time(num_layers, std::vector<double>(h, 0.0));
  matvec_transpose_acc(params.head_weight, d_output, dh_time[num_layers - 1]);

  std::vector<double> d_pre(4 * h);
  for (std::size_t t = T; t-- > 0;) {
    std::vector<double> dx_above;  // gradient into the input of the layer above
    for (std::size_t l = num_layers; l-- > 0;) {
      const LstmStepCache& sc = cache.steps[t][l];
      std::vector<double>& dh = dh_time[l];
      if (l + 1 < num_layers)
        for (std::size_t i = 0; i < h; ++i) dh[i] += dx_above[i];

      std::vector<double>& dc = dc_time[l];
      for (std::size_t i = 0; i < h; ++i) {
        const double do_gate = dh[i] * sc.tanh_c[i];
        dc[i] += dh[i] * sc.gate_o[i] * (1.0 - sc.tanh_c[i] * sc.tanh_c[i]);
        const double di = dc[i] * sc.gate_g[i];
        const double df = dc[i] * sc.c_prev[i];
        const double dg = dc[i] * sc.gate_i[i];
        d_pre[i] = di * sc.gate_i[i] * (1.0 - sc.gate_i[i]);
        d_pre[h + i] = df * sc.gate_f[i] * (1.0 - sc.gate_f[i]);
        d_pre[2 * h + i] = dg * (1.0 - sc.gate_g[i] * sc.gate_g[i]);
        d_pre[3 * h + i] = do_gate * sc.gate_o[i] * (1.0 - sc.gate_o[i]);
        dc[i] *= sc.gate_f[i];  // becomes dc_prev
      }

      LstmLayer& g = grads.layers[l];
      outer_acc(g.w_input, d_pre, sc.x);
      outer_acc(g.w_hidden, d_pre, sc.h_prev);
      for (std::size_t i = 0; i < 4 * h; ++i) g.bias.data[i] += d_pre[i];

      std::vector<double> dx(sc.x.size(), 0.0);
      dh.assign(h, 0.0);
      matvec_transpose_acc(params.layers[l].w_input, d_pre, dx);
      matvec_transpose_acc(params.layers[l].w_hidden, d_pre, dh);  // dh_prev
      dx_above = std::move(dx);
    }
  }
}

// ---------------------------------------------------------------------------
// Flat parameter views and the adaptive-moment optimizer.
// ---------------------------------------------------------------------------

inline std::vector<Tensor*> tensor_list(MlpParams& p) {
  std::vector<Tensor*> out;
  for (auto& layer : p.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

inline std::vector<Tensor*> tensor_list(MlpGrads& g) {
  std::vector<Tensor*> out;
  for (auto& layer : g.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

inline std::vector<Tensor*> tensor_list(LstmParams& p) {
  std::vector<Tensor*> out;
  for (auto& layer : p.layers) {
    out.push_back(&layer.w_input);
    out.push_back(&layer.w_hidden);
    out.push_back(&layer.bias);
  }
  out.push_back(&p.head_weight);
  out.push_back(&p.head_bias);
  return out;
}

inline std::vector<Tensor*> tensor_list(LstmGrads& g) {
  std::vector<Tensor*> out;
  for (auto& layer : g.layers) {
    out.push_back(&layer.w_input);
    out.push_back(&layer.w_hidden);
    out.push_back(&layer.bias);
  }
  out.push_back(&g.head_weight);
  out.push_back(&g.head_bias);
  return out;
}

template <typename Params>
std::vector<double> flatten_params(Params& p) {
  std::vector<double> flat;
  for (Tensor* t : tensor_list(p)) flat.insert(flat.end(), t->data.begin(), t->data.end());
  return flat;
}

template <typename Params>
void unflatten_params(Params& p, const std::vector<double>& flat) {
  std::size_t offset = 0;
  for (Tensor* t : tensor_list(p)) {
    std::copy(flat.begin() + offset, flat.begin() + offset + t->numel(), t->data.begin());
    offset += t->numel();
  }
  if (offset != flat.size()) throw ShapeError("unflatten_params: size mismatch");
}

template <typename Grads>
void zero_grads(Grads& g) {
  for (Tensor* t : tensor_list(g)) t->fill(0.0);
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// One adaptive-moment update over the flattened parameter list.
template <typename Params, typename Grads>
void adam_step(Params& params, Grads& grads, AdamState& state) {
  const auto p_list = tensor_list(params);
  auto g_list = tensor_list(grads);
  std::size_t total = 0;
  for (const Tensor* t : p_list) total += t->numel();
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total) throw ShapeError("adam_step: optimizer state size mismatch");

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::size_t k = 0;
  for (std::size_t i = 0; i < p_list.size(); ++i) {
    Tensor* p = p_list[i];
    const Tensor* g = g_list[i];
    for (std::size_t j = 0; j < p->numel(); ++j, ++k) {
      const double grad = g->data[j];
      if (!std::isfinite(grad))
        throw TrainingDivergenceError("adam_step: non-finite gradient in tensor " +
                                      std::to_string(i));
      state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grad;
      state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grad * grad;
      const double m_hat = state.m[k] / bc1;
      const double v_hat = state.v[k] / bc2;
      p->data[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization: versioned JSON container with topology + parameter arrays.
// ---------------------------------------------------------------------------

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  Tensor t;
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  t.data = j.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (auto d : t.shape) n *= d;
  if (n != t.data.size()) throw ShapeError("tensor_from_json: shape/data mismatch");
  return t;
}

inline nlohmann::json mlp_to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : p.layers)
    layers.push_back({{"weight", tensor_to_json(layer.weight)}, {"bias", tensor_to_json(layer.bias)}});
  return {{"format_version", 1}, {"kind", "mlp"}, {"layers", layers}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  if (j.at("kind") != "mlp") throw ShapeError("mlp_from_json: wrong container kind");
  MlpParams p;
  for (const auto& layer : j.at("layers"))
    p.layers.push_back({tensor_from_json(layer.at("weight")), tensor_from_json(layer.at("bias"))});
  return p;
}

inline nlohmann::json lstm_to_json(const LstmParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : p.layers)
    layers.push_back({{"w_input", tensor_to_json(layer.w_input)},
                      {"w_hidden", tensor_to_json(layer.w_hidden)},
                      {"bias", tensor_to_json(layer.bias)}});
  return {{"format_version", 1},
          {"kind", "lstm"},
          {"hidden", p.hidden},
          {"layers", layers},
          {"head_weight", tensor_to_json(p.head_weight)},
          {"head_bias", tensor_to_json(p.head_bias)}};
}

inline LstmParams lstm_from_json(const nlohmann::json& j) {
  if (j.at("kind") != "lstm") throw ShapeError("lstm_from_json: wrong container kind");
  LstmParams p;
  p.hidden = j.at("hidden").get<std::size_t>();
  for (const auto& layer : j.at("layers"))
    p.layers.push_back({tensor_from_json(layer.at("w_input")),
                        tensor_from_json(layer.at("w_hidden")),
                        tensor_from_json(layer.at("bias"))});
  p.head_weight = tensor_from_json(j.at("head_weight"));
  p.head_bias = tensor_from_json(j.at("head_bias"));
  return p;
}

}  // namespace cpsf
