#include "schyena/gradcheck.hpp"

#include <random>

#include "schyena/fft_conv.hpp"
#include "schyena/hyena.hpp"
#include "schyena/model.hpp"
#include "schyena/training.hpp"

namespace schyena {

namespace {

Tensor uniform_leaf(Index rows, Index cols, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor(std::move(m), true);
}

Vector uniform_vector(Index n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

// Weighted sum so every output entry carries a distinct cotangent.
Tensor probe_sum(const Tensor& y, const Matrix& weights) { return sum(mul(y, Tensor(weights))); }

Matrix probe_weights(const Tensor& like, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix w(like.rows(), like.cols());
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

}  // namespace

void check_gradients(const std::string& suite, const std::vector<std::pair<std::string, Tensor>>& inputs,
                     const std::function<Tensor()>& f, const GradCheckOptions& options,
                     std::vector<GradCheckEntry>& out) {
  for (const auto& [name, t] : inputs) Tensor(t).zero_grad();
  f().backward();
  for (const auto& [name, t] : inputs) {
    const Matrix analytic = t.has_grad() ? t.grad() : Matrix::Zero(t.rows(), t.cols());
    const Matrix numeric = finite_diff_grad(
        [&](const Tensor&) {
          NoGradGuard no_grad;
          return f().item();
        },
        t, options.step);
    GradCheckEntry e;
    e.suite = suite;
    e.name = name;
    e.error = relative_error(analytic, numeric);
    e.passed = e.error < options.tolerance;
    out.push_back(e);
  }
}

std::vector<GradCheckEntry> gradcheck_tensor_ops(const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<GradCheckEntry> out;
  const std::string suite = "tensor";

  Tensor a = uniform_leaf(3, 4, rng), b = uniform_leaf(4, 2, rng);
  check_gradients(suite, {{"matmul.a", a}, {"matmul.b", b}}, [&] { return sum(matmul(a, b)); }, options, out);

  Tensor x = uniform_leaf(3, 4, rng), y = uniform_leaf(3, 4, rng);
  const Matrix w = probe_weights(x, rng);
  check_gradients(suite, {{"mul.a", x}, {"mul.b", y}}, [&] { return probe_sum(mul(x, y), w); }, options, out);
  check_gradients(suite, {{"sub.a", x}, {"sub.b", y}}, [&] { return probe_sum(sub(x, y), w); }, options, out);

  Tensor gain = uniform_leaf(1, 4, rng), bias = uniform_leaf(1, 4, rng);
  check_gradients(suite, {{"layer_norm.x", x}, {"layer_norm.gain", gain}, {"layer_norm.bias", bias}},
                  [&] { return probe_sum(layer_norm(x, gain, bias), w); }, options, out);

  check_gradients(suite, {{"gelu", x}}, [&] { return probe_sum(gelu(x), w); }, options, out);
  check_gradients(suite, {{"sin", x}}, [&] { return probe_sum(sin(x), w); }, options, out);
  check_gradients(suite, {{"add_row.x", x}, {"add_row.row", bias}}, [&] { return probe_sum(add_row(x, bias), w); },
                  options, out);

  Tensor table = uniform_leaf(5, 4, rng);
  const std::vector<Index> idx{1, 1, 4};
  const Matrix wg = probe_weights(Tensor::zeros(3, 4), rng);
  check_gradients(suite, {{"gather_rows", table}}, [&] { return probe_sum(gather_rows(table, idx), wg); }, options,
                  out);

  const Matrix wm = probe_weights(Tensor::zeros(1, 4), rng);
  check_gradients(suite, {{"mean_rows", x}}, [&] { return probe_sum(mean_rows(x), wm); }, options, out);

  const Matrix wc = probe_weights(Tensor::zeros(8, 4), rng);
  check_gradients(
      suite, {{"concat_rows.a", x}, {"concat_rows.b", table}},
      [&] {
        const std::vector<Tensor> parts{x, table};
        return probe_sum(concat_rows(parts), wc);
      },
      options, out);

  const Matrix ws = probe_weights(Tensor::zeros(2, 2), rng);
  check_gradients(suite, {{"slice", x}}, [&] { return probe_sum(slice_cols(slice_rows(x, 1, 2), 1, 2), ws); },
                  options, out);
  return out;
}

std::vector<GradCheckEntry> gradcheck_conv(const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed + 1);
  std::vector<GradCheckEntry> out;
  for (ConvMode mode : {ConvMode::causal, ConvMode::bidirectional})
    for (Index length : {Index{7}, kDirectConvMaxLength + 9}) {
      const std::string tag = (mode == ConvMode::causal ? "causal" : "bidirectional") + std::string(".L") +
                              std::to_string(length);
      Tensor u = uniform_leaf(length, 3, rng);
      Tensor h = uniform_leaf(filter_length(length, mode), 3, rng);
      const Matrix w = probe_weights(u, rng);
      check_gradients("conv", {{tag + ".signal", u}, {tag + ".taps", h}},
                      [&] { return probe_sum(long_conv(u, h, mode), w); }, options, out);
    }
  return out;
}

std::vector<GradCheckEntry> gradcheck_hyena(const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed + 2);
  std::vector<GradCheckEntry> out;
  const Index length = 8, width = 4;

  ImplicitFilter filter = ImplicitFilter::init(width, 8, 3, length, rng);
  {
    std::vector<std::pair<std::string, Tensor>> inputs;
    visit_parameters(filter, "filter", [&](const std::string& name, Tensor& t, bool) { inputs.emplace_back(name, t); });
    check_gradients("hyena", inputs, [&] { return sum(materialize_filter(filter, length, ConvMode::bidirectional)); },
                    options, out);
  }

  HyenaParams params = HyenaParams::init(width, 2, 8, 3, length, rng);
  Tensor u = uniform_leaf(length, width, rng);
  {
    std::vector<std::pair<std::string, Tensor>> inputs{{"project.u", u}};
    visit_parameters(params.in_proj, "project.in_proj", [&](const std::string& name, Tensor& t, bool) {
      inputs.emplace_back(name, t);
    });
    inputs.emplace_back("project.short_kernel", params.short_kernel);
    std::vector<Matrix> weights;
    for (int s = 0; s <= params.order; ++s) weights.push_back(probe_weights(u, rng));
    check_gradients(
        "hyena", inputs,
        [&] {
          const auto streams = project_input(u, params);
          Tensor total = probe_sum(streams[0], weights[0]);
          for (std::size_t s = 1; s < streams.size(); ++s) total = add(total, probe_sum(streams[s], weights[s]));
          return total;
        },
        options, out);
  }

  std::vector<HyenaBlock> blocks;
  for (int m = 0; m < 2; ++m) blocks.push_back(HyenaBlock::init(width, 2, 8, 3, length, rng));
  std::vector<std::pair<std::string, Tensor>> inputs{{"blocks.u", u}};
  for (int m = 0; m < 2; ++m)
    visit_parameters(blocks[m], "blocks." + std::to_string(m), [&](const std::string& name, Tensor& t, bool) {
      inputs.emplace_back(name, t);
    });
  const Matrix w = probe_weights(u, rng);
  check_gradients(
      "hyena", inputs,
      [&] {
        Tensor h = u;
        for (const auto& block : blocks) h = block_forward(h, block);
        return probe_sum(h, w);
      },
      options, out);
  return out;
}

std::vector<GradCheckEntry> gradcheck_model(const GradCheckOptions& options) {
  ModelConfig config;
  config.genes = 8;
  config.width = 4;
  config.blocks = 2;
  config.order = 2;
  config.filter_hidden = 8;
  config.frequencies = 3;
  config.num_classes = 3;
  ModelParams model = ModelParams::init(config, options.seed + 3);

  std::mt19937_64 rng(options.seed + 4);
  Vector cell = uniform_vector(config.genes, rng, 0.0, 2.0);
  cell(2) = 0.0;
  cell(5) = 0.0;
  const MaskPlan mask = mask_from_positions(cell, {1, 2, 6});

  std::vector<std::pair<std::string, Tensor>> inputs;
  for (const auto& p : model.parameters()) inputs.emplace_back(p.name, p.tensor);
  std::vector<GradCheckEntry> out;
  check_gradients(
      "model", inputs,
      [&] { return add(*mem_loss(forward_mem(cell, mask, model), cell, mask), classify_loss(forward_classify(cell, model), 1)); },
      options, out);
  return out;
}

std::vector<GradCheckEntry> gradcheck_all(const GradCheckOptions& options) {
  std::vector<GradCheckEntry> all;
  for (auto suite : {gradcheck_tensor_ops, gradcheck_conv, gradcheck_hyena, gradcheck_model}) {
    auto part = suite(options);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace schyena
