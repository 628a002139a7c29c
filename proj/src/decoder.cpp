#include "molgeom/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "molgeom/errors.hpp"

namespace molgeom {

void DecoderConfig::validate() const {
  if (vocab_size == 0 || width == 0 || heads == 0) {
    throw SchemaError("decoder: vocab_size, width and heads must be >= 1");
  }
  if (width % heads != 0) throw SchemaError("decoder: width must be divisible by heads");
}

void PromptTokens::validate() const {
  for (const std::size_t id : ids) {
    if (id >= vocab_size) {
      throw SchemaError("prompt id " + std::to_string(id) + " is outside a vocabulary of " +
                        std::to_string(vocab_size));
    }
  }
}

TokenMatrix assemble_prefix(const TokenMatrix& h_fused, const PromptTokens& prompt,
                            const EmbeddingTable& txt_table) {
  if (txt_table.dim() != h_fused.cols()) {
    throw ShapeError("text embedding width " + std::to_string(txt_table.dim()) +
                     " differs from H_fused width " + std::to_string(h_fused.cols()));
  }
  prompt.validate();
  TokenMatrix txt(prompt.ids.size(), txt_table.dim());
  for (std::size_t i = 0; i < prompt.ids.size(); ++i) {
    const auto row = txt_table.row(prompt.ids[i]);
    std::copy(row.begin(), row.end(), txt.row(i).begin());
  }
  return concat_rows(h_fused, txt);
}

ToyDecoder::ToyDecoder(DecoderConfig cfg)
    : cfg_(cfg), txt_(cfg.vocab_size, cfg.width, derive_seed(cfg.seed, "txt")) {
  cfg_.validate();
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    blocks_.push_back(
        make_block(cfg_.width, 4 * cfg_.width, cfg_.heads, cfg_.seed, "dec." + std::to_string(l)));
  }
  final_gain_.assign(cfg_.width, 1.0f);
  final_bias_.assign(cfg_.width, 0.0f);
  vocab_w_ = seeded_matrix<float>(cfg_.width, cfg_.vocab_size, derive_seed(cfg_.seed, "vocab.w"));
  vocab_b_ = seeded_params<float>(cfg_.vocab_size, cfg_.width, derive_seed(cfg_.seed, "vocab.b"));
}

void ToyDecoder::zero_all() {
  const auto zero = [](auto& v) { std::fill(v.begin(), v.end(), 0.0f); };
  txt_ = EmbeddingTable(TokenMatrix(cfg_.vocab_size, cfg_.width));
  for (BlockParams& b : blocks_) {
    zero(b.ln1_gain), zero(b.ln1_bias), zero(b.ln2_gain), zero(b.ln2_bias);
    for (TokenMatrix* m : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo, &b.mlp.w1, &b.mlp.w2}) {
      zero(m->data());
    }
    zero(b.attn.bq), zero(b.attn.bk), zero(b.attn.bv), zero(b.attn.bo);
    zero(b.mlp.b1), zero(b.mlp.b2);
  }
  zero(final_gain_), zero(final_bias_), zero(vocab_w_.data()), zero(vocab_b_);
}

DecoderState ToyDecoder::start(const TokenMatrix& h_fused, const PromptTokens& prompt) const {
  DecoderState state;
  state.context = assemble_prefix(h_fused, prompt, txt_);
  state.prefix_rows = state.context.rows();
  return state;
}

void ToyDecoder::append(DecoderState& state, std::size_t token) const {
  const auto row = txt_.row(token);
  state.context = concat_rows(state.context, TokenMatrix(1, row.size(), {row.begin(), row.end()}));
  state.generated.push_back(token);
}

TokenMatrix ToyDecoder::hidden(const TokenMatrix& context) const {
  if (context.cols() != cfg_.width) throw ShapeError("decoder context width differs from config");
  TokenMatrix h = context;
  for (const BlockParams& b : blocks_) h = prenorm_block(h, b, {}, true);
  return layer_norm(h, std::span<const float>(final_gain_), std::span<const float>(final_bias_));
}

std::vector<double> ToyDecoder::logits_for_row(const TokenMatrix& hidden_states,
                                               std::size_t row) const {
  const auto h = hidden_states.row(row);
  std::vector<double> out(vocab_b_.begin(), vocab_b_.end());
  for (std::size_t c = 0; c < h.size(); ++c) {
    const double hc = h[c];
    if (hc == 0.0) continue;
    const auto w = vocab_w_.row(c);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += hc * static_cast<double>(w[v]);
  }
  return out;
}

std::vector<double> ToyDecoder::logits(const DecoderState& state) const {
  if (state.context.rows() == 0) throw ShapeError("decoder context is empty");
  return logits_for_row(hidden(state.context), state.context.rows() - 1);
}

std::vector<double> softmax_probs(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw SchemaError("temperature must be a positive finite number");
  }
  std::vector<double> p(logits.size());
  if (p.empty()) return p;
  double max_v = -std::numeric_limits<double>::infinity();
  for (const double l : logits) max_v = std::max(max_v, l / temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - max_v);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> step(const DecoderState& state, const ToyDecoder& decoder) {
  const std::vector<double> l = decoder.logits(state);
  return softmax_probs(l);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t sample_categorical(std::span<const double> probs, double u) {
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last_positive = i;
    if (u < cum) return i;
  }
  return last_positive;
}

std::vector<std::size_t> greedy_decode(DecoderState state, const ToyDecoder& decoder,
                                       std::size_t t_max, std::size_t stop_id) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < t_max; ++t) {
    const std::size_t token = argmax(step(state, decoder));
    out.push_back(token);
    if (token == stop_id) break;
    decoder.append(state, token);
  }
  return out;
}

std::vector<std::size_t> sample_decode(DecoderState state, const ToyDecoder& decoder,
                                       std::size_t t_max, std::uint64_t seed, double temperature,
                                       std::optional<std::size_t> stop_id) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw SchemaError("sampling temperature must be a positive finite number");
  }
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < t_max; ++t) {
    const std::vector<double> l = decoder.logits(state);
    const std::vector<double> p = softmax_probs(l, temperature);
    const std::size_t token = sample_categorical(p, CounterRng(seed, t).next_unit());
    out.push_back(token);
    if (stop_id && token == *stop_id) break;
    decoder.append(state, token);
  }
  return out;
}

double sequence_logprob(const DecoderState& state, const ToyDecoder& decoder,
                        std::span<const std::size_t> y) {
  if (y.empty()) return 0.0;
  if (state.context.rows() == 0) throw ShapeError("decoder context is empty");
  DecoderState full = state;
  for (std::size_t t = 0; t + 1 < y.size(); ++t) decoder.append(full, y[t]);
  const TokenMatrix h = decoder.hidden(full.context);
  const std::size_t first = state.context.rows() - 1;
  double total = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t] >= decoder.config().vocab_size) {
      throw SchemaError("token " + std::to_string(y[t]) + " is outside the vocabulary");
    }
    const std::vector<double> p = softmax_probs(decoder.logits_for_row(h, first + t));
    total += std::log(p[y[t]]);
  }
  return total;
}

}  // namespace molgeom
