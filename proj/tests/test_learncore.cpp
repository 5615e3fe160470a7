#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cpsf/learncore.hpp"

using namespace cpsf;

namespace {

// Relative error between analytic and finite-difference gradients, guarded
// against near-zero denominators.
double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Central finite differences over flattened parameters.
template <typename Params, typename LossFn>
std::vector<double> finite_difference(Params& params, LossFn loss, double h = 1e-5) {
  std::vector<double> flat = flatten_params(params);
  std::vector<double> grad(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + h;
    unflatten_params(params, flat);
    const double up = loss();
    flat[i] = saved - h;
    unflatten_params(params, flat);
    const double down = loss();
    flat[i] = saved;
    grad[i] = (up - down) / (2 * h);
  }
  unflatten_params(params, flat);
  return grad;
}

}  // namespace

TEST_CASE("mlp with zero weights outputs zero") {
  Rng rng(1);
  MlpParams p = make_mlp({3, 4, 2}, rng);
  for (Tensor* t : tensor_list(p)) t->fill(0.0);
  const auto y = mlp_forward(p, {0.5, -1.0, 2.0});
  REQUIRE(y.size() == 2);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
}

TEST_CASE("single identity-like linear layer passes input through") {
  Rng rng(1);
  MlpParams p = make_mlp({3, 3}, rng);
  p.layers[0].weight.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) p.layers[0].weight.at(i, i) = 1.0;
  p.layers[0].bias.fill(0.0);
  const auto y = mlp_forward(p, {0.3, -0.7, 1.1});
  CHECK(y[0] == 0.3);
  CHECK(y[1] == -0.7);
  CHECK(y[2] == 1.1);
}

TEST_CASE("mlp forward matches straightforward reimplementation") {
  Rng rng(42);
  MlpParams p = make_mlp({4, 5, 3}, rng);
  std::vector<double> x = {0.1, -0.4, 0.9, 0.2};

  // duplicate path: naive loops written independently of mlp_forward
  std::vector<double> h1(5, 0.0);
  for (int i = 0; i < 5; ++i) {
    double acc = p.layers[0].bias.data[i];
    for (int j = 0; j < 4; ++j) acc += p.layers[0].weight.at(i, j) * x[j];
    h1[i] = std::tanh(acc);
  }
  std::vector<double> expect(3, 0.0);
  for (int i = 0; i < 3; ++i) {
    double acc = p.layers[1].bias.data[i];
    for (int j = 0; j < 5; ++j) acc += p.layers[1].weight.at(i, j) * h1[j];
    expect[i] = acc;
  }

  const auto y = mlp_forward(p, x);
  for (int i = 0; i < 3; ++i) REQUIRE(y[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("mlp shape mismatch names both shapes") {
  Rng rng(3);
  MlpParams p = make_mlp({4, 2}, rng);
  CHECK_THROWS_AS(mlp_forward(p, {1.0, 2.0}), ShapeError);
}

TEST_CASE("constant loss produces zero gradients") {
  Rng rng(5);
  MlpParams p = make_mlp({2, 3, 1}, rng);
  MlpGrads g = make_mlp_grads(p);
  MlpCache cache;
  mlp_forward(p, {0.2, 0.4}, &cache);
  mlp_backward(p, cache, {0.0}, g);  // dL/dy = 0 for constant loss
  for (Tensor* t : tensor_list(g))
    for (double v : t->data) REQUIRE(v == 0.0);
}

TEST_CASE("quadratic single-layer gradient matches closed form") {
  // loss = |W x - y|^2, dW = 2 (W x - y) x^T
  Rng rng(6);
  MlpParams p = make_mlp({3, 2}, rng);
  p.layers[0].bias.fill(0.0);
  const std::vector<double> x = {0.5, -1.0, 2.0};
  const std::vector<double> target = {1.0, -0.5};

  MlpCache cache;
  const auto out = mlp_forward(p, x, &cache);
  std::vector<double> d_out(2);
  for (int i = 0; i < 2; ++i) d_out[i] = 2.0 * (out[i] - target[i]);
  MlpGrads g = make_mlp_grads(p);
  mlp_backward(p, cache, d_out, g);

  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      REQUIRE(g.layers[0].weight.at(i, j) ==
              Catch::Approx(2.0 * (out[i] - target[i]) * x[j]).margin(1e-12));
}

TEST_CASE("mlp gradients match central finite differences") {
  Rng rng(7);
  MlpParams p = make_mlp({3, 6, 4, 2}, rng);
  const std::vector<double> x = {0.3, -0.8, 0.5};
  const std::vector<double> target = {0.7, -0.2};

  auto loss = [&]() {
    const auto y = mlp_forward(p, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return s;
  };

  MlpCache cache;
  const auto y = mlp_forward(p, x, &cache);
  std::vector<double> d_out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) d_out[i] = 2.0 * (y[i] - target[i]);
  MlpGrads g = make_mlp_grads(p);
  mlp_backward(p, cache, d_out, g);
  const auto analytic = flatten_params(g);
  const auto numeric = finite_difference(p, loss);

  double max_err = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    max_err = std::max(max_err, grad_rel_error(analytic[i], numeric[i]));
  CHECK(max_err < 1e-4);
}

TEST_CASE("lstm with zero weights gives zero hidden states") {
  Rng rng(8);
  LstmParams p = make_lstm(2, 3, 2, 4, rng);
  for (Tensor* t : tensor_list(p)) t->fill(0.0);
  const auto y = lstm_forward(p, {{0.5, 1.0}, {1.0, -1.0}});
  for (double v : y) REQUIRE(v == 0.0);
}

TEST_CASE("length-1 sequence equals single-step cell application") {
  Rng rng(9);
  LstmParams p = make_lstm(2, 4, 1, 3, rng);
  const std::vector<double> x = {0.4, -0.6};

  // hand-unrolled single step with zero initial state
  const std::size_t h = 4;
  std::vector<double> pre(4 * h, 0.0);
  for (std::size_t i = 0; i < 4 * h; ++i) {
    double acc = p.layers[0].bias.data[i];
    for (std::size_t j = 0; j < 2; ++j) acc += p.layers[0].w_input.at(i, j) * x[j];
    pre[i] = acc;
  }
  std::vector<double> expect_h(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double gi = 1.0 / (1.0 + std::exp(-pre[i]));
    const double gg = std::tanh(pre[2 * h + i]);
    const double go = 1.0 / (1.0 + std::exp(-pre[3 * h + i]));
    const double c = gi * gg;
    expect_h[i] = go * std::tanh(c);
  }
  std::vector<double> expect(3);
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = p.head_bias.data[i];
    for (std::size_t j = 0; j < h; ++j) acc += p.head_weight.at(i, j) * expect_h[j];
    expect[i] = acc;
  }

  const auto y = lstm_forward(p, {x});
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(y[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("lstm forward matches step-by-step unrolling oracle") {
  Rng rng(10);
  LstmParams p = make_lstm(3, 4, 2, 2, rng);
  const std::vector<std::vector<double>> seq = {{0.1, 0.2, -0.3}, {0.4, -0.1, 0.6}, {-0.2, 0.5, 0.0}};

  // independent unrolling with explicit per-layer state
  const std::size_t h = 4;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<std::vector<double>> hs(2, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> cs(2, std::vector<double>(h, 0.0));
  for (const auto& x_in : seq) {
    std::vector<double> x = x_in;
    for (int l = 0; l < 2; ++l) {
      const auto& layer = p.layers[l];
      std::vector<double> pre(4 * h);
      for (std::size_t i = 0; i < 4 * h; ++i) {
        double acc = layer.bias.data[i];
        for (std::size_t j = 0; j < x.size(); ++j) acc += layer.w_input.at(i, j) * x[j];
        for (std::size_t j = 0; j < h; ++j) acc += layer.w_hidden.at(i, j) * hs[l][j];
        pre[i] = acc;
      }
      for (std::size_t i = 0; i < h; ++i) {
        const double gi = sig(pre[i]);
        const double gf = sig(pre[h + i]);
        const double gg = std::tanh(pre[2 * h + i]);
        const double go = sig(pre[3 * h + i]);
        cs[l][i] = gf * cs[l][i] + gi * gg;
        hs[l][i] = go * std::tanh(cs[l][i]);
      }
      x = hs[l];
    }
  }
  std::vector<double> expect(2);
  for (std::size_t i = 0; i < 2; ++i) {
    double acc = p.head_bias.data[i];
    for (std::size_t j = 0; j < h; ++j) acc += p.head_weight.at(i, j) * hs[1][j];
    expect[i] = acc;
  }

  const auto y = lstm_forward(p, seq);
  for (std::size_t i = 0; i < 2; ++i) REQUIRE(y[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("lstm gradients match central finite differences") {
  Rng rng(11);
  LstmParams p = make_lstm(2, 3, 2, 2, rng);
  const std::vector<std::vector<double>> seq = {{0.2, -0.5}, {0.7, 0.1}, {-0.3, 0.4}};
  const std::vector<double> target = {0.5, -1.0};

  auto loss = [&]() {
    const auto y = lstm_forward(p, seq);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return s;
  };

  LstmCache cache;
  const auto y = lstm_forward(p, seq, &cache);
  std::vector<double> d_out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) d_out[i] = 2.0 * (y[i] - target[i]);
  LstmGrads g = make_lstm_grads(p);
  lstm_backward(p, cache, d_out, g);
  const auto analytic = flatten_params(g);
  const auto numeric = finite_difference(p, loss);

  REQUIRE(analytic.size() == numeric.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    max_err = std::max(max_err, grad_rel_error(analytic[i], numeric[i]));
  CHECK(max_err < 1e-4);
}

TEST_CASE("gradient check property over random architectures") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t in = 2 + rng.uniform_int(3);
    const std::size_t hid = 2 + rng.uniform_int(5);
    const std::size_t out = 1 + rng.uniform_int(3);
    MlpParams p = make_mlp({in, hid, out}, rng);
    REQUIRE(flatten_params(p).size() < 1000);

    std::vector<double> x(in);
    for (auto& v : x) v = rng.uniform(-1, 1);
    std::vector<double> target(out);
    for (auto& v : target) v = rng.uniform(-1, 1);

    auto loss = [&]() {
      const auto y = mlp_forward(p, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
      return s;
    };

    MlpCache cache;
    const auto y = mlp_forward(p, x, &cache);
    std::vector<double> d_out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) d_out[i] = 2.0 * (y[i] - target[i]);
    MlpGrads g = make_mlp_grads(p);
    mlp_backward(p, cache, d_out, g);
    const auto analytic = flatten_params(g);
    const auto numeric = finite_difference(p, loss);
    for (std::size_t i = 0; i < analytic.size(); ++i)
      REQUIRE(grad_rel_error(analytic[i], numeric[i]) < 1e-4);
  }
}

TEST_CASE("adam leaves params unchanged on zero gradient") {
  Rng rng(12);
  MlpParams p = make_mlp({2, 2}, rng);
  const auto before = flatten_params(p);
  MlpGrads g = make_mlp_grads(p);
  AdamState opt;
  adam_step(p, g, opt);
  const auto after = flatten_params(p);
  for (std::size_t i = 0; i < before.size(); ++i) REQUIRE(before[i] == after[i]);
  CHECK(opt.step == 1);
}

TEST_CASE("adam descends on 1d quadratic") {
  Rng rng(13);
  MlpParams p = make_mlp({1, 1}, rng);
  p.layers[0].weight.data[0] = 1.0;
  p.layers[0].bias.data[0] = 0.0;
  MlpGrads g = make_mlp_grads(p);
  AdamState opt;
  // f(w) = w^2, df/dw = 2w
  g.layers[0].weight.data[0] = 2.0 * p.layers[0].weight.data[0];
  adam_step(p, g, opt);
  CHECK(std::abs(p.layers[0].weight.data[0]) < 1.0);
}

TEST_CASE("adam converges on 2d convex quadratic") {
  // f(w) = (w0 - 3)^2 + 2 (w1 + 1)^2, optimum (3, -1)
  Rng rng(14);
  MlpParams p = make_mlp({2, 1}, rng);
  p.layers[0].weight.at(0, 0) = 0.0;
  p.layers[0].weight.at(0, 1) = 0.0;
  MlpGrads g = make_mlp_grads(p);
  AdamState opt;
  opt.lr = 1e-2;
  for (int step = 0; step < 2000; ++step) {
    const double w0 = p.layers[0].weight.at(0, 0);
    const double w1 = p.layers[0].weight.at(0, 1);
    zero_grads(g);
    g.layers[0].weight.at(0, 0) = 2.0 * (w0 - 3.0);
    g.layers[0].weight.at(0, 1) = 4.0 * (w1 + 1.0);
    g.layers[0].bias.data[0] = 0.0;
    adam_step(p, g, opt);
  }
  const double w0 = p.layers[0].weight.at(0, 0);
  const double w1 = p.layers[0].weight.at(0, 1);
  CHECK(std::sqrt((w0 - 3) * (w0 - 3) + (w1 + 1) * (w1 + 1)) < 1e-3);
}

TEST_CASE("serialization round-trip is bit-exact") {
  Rng rng(15);
  LstmParams p = make_lstm(3, 5, 2, 4, rng);
  const auto j = lstm_to_json(p);
  const auto text = j.dump();
  const LstmParams q = lstm_from_json(nlohmann::json::parse(text));
  const auto a = flatten_params(p);
  LstmParams q_mut = q;
  const auto b = flatten_params(q_mut);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  MlpParams mp = make_mlp({4, 8, 2}, rng);
  MlpParams mq = mlp_from_json(nlohmann::json::parse(mlp_to_json(mp).dump()));
  const auto ma = flatten_params(mp);
  const auto mb = flatten_params(mq);
  for (std::size_t i = 0; i < ma.size(); ++i) REQUIRE(ma[i] == mb[i]);
}

TEST_CASE("training step sequence is bit-reproducible") {
  auto run = []() {
    Rng rng(77);
    MlpParams p = make_mlp({2, 4, 1}, rng);
    MlpGrads g = make_mlp_grads(p);
    AdamState opt;
    Rng data_rng(78);
    for (int step = 0; step < 50; ++step) {
      const std::vector<double> x = {data_rng.uniform(-1, 1), data_rng.uniform(-1, 1)};
      const double target = x[0] * 0.5 - x[1];
      MlpCache cache;
      const auto y = mlp_forward(p, x, &cache);
      zero_grads(g);
      mlp_backward(p, cache, {2.0 * (y[0] - target)}, g);
      adam_step(p, g, opt);
    }
    return flatten_params(p);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}
