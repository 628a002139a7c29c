#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "molgeom/numerics.hpp"
#include "molgeom/structok.hpp"
#include "molgeom/transformer.hpp"

namespace molgeom {

struct DecoderConfig {
  std::size_t vocab_size = 32;
  std::size_t width = 64;  // d_h
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::uint64_t seed = 0x5eed0003;

  // SchemaError on zero sizes or width % heads != 0.
  void validate() const;
};

struct PromptTokens {
  std::vector<std::size_t> ids;
  std::size_t vocab_size = 0;

  // Throws SchemaError when an id is >= vocab_size.
  void validate() const;
};

// H_in followed by the embeddings of the tokens generated so far.
struct DecoderState {
  TokenMatrix context;
  std::vector<std::size_t> generated;
  std::size_t prefix_rows = 0;  // N_v + P
};

// [H_fused; E_txt(x_1) ... E_txt(x_P)]. ShapeError when the table width
// differs from H_fused.
TokenMatrix assemble_prefix(const TokenMatrix& h_fused, const PromptTokens& prompt,
                            const EmbeddingTable& txt_table);

// Causal pre-norm transformer over the context, final layer norm, and a
// linear map to vocabulary logits. Deterministic seeded weights.
class ToyDecoder {
 public:
  explicit ToyDecoder(DecoderConfig cfg);

  const DecoderConfig& config() const { return cfg_; }

  EmbeddingTable& txt_table() { return txt_; }
  const EmbeddingTable& txt_table() const { return txt_; }
  std::vector<BlockParams>& blocks() { return blocks_; }
  std::vector<float>& final_gain() { return final_gain_; }
  std::vector<float>& final_bias() { return final_bias_; }
  TokenMatrix& vocab_weight() { return vocab_w_; }  // width x |V|
  std::vector<float>& vocab_bias() { return vocab_b_; }

  // Every weight, layer-norm gain and bias set to zero, embeddings included.
  void zero_all();

  DecoderState start(const TokenMatrix& h_fused, const PromptTokens& prompt) const;
  void append(DecoderState& state, std::size_t token) const;

  // Hidden states of every context row; row i sees rows <= i only.
  TokenMatrix hidden(const TokenMatrix& context) const;
  // Logits from the last row of the context, in double.
  std::vector<double> logits(const DecoderState& state) const;

 private:
  std::vector<double> logits_for_row(const TokenMatrix& hidden_states, std::size_t row) const;

  friend double sequence_logprob(const DecoderState&, const ToyDecoder&,
                                 std::span<const std::size_t>);

  DecoderConfig cfg_;
  EmbeddingTable txt_;
  std::vector<BlockParams> blocks_;
  std::vector<float> final_gain_, final_bias_;
  TokenMatrix vocab_w_;
  std::vector<float> vocab_b_;
};

// Softmax in double over logits / temperature.
std::vector<double> softmax_probs(std::span<const double> logits, double temperature = 1.0);

// pi_t over the vocabulary for the next token. ShapeError on an empty context.
std::vector<double> step(const DecoderState& state, const ToyDecoder& decoder);

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> values);

// Smallest index i with u < cumsum(p)[i]; the last positive entry if
// rounding leaves u above the total.
std::size_t sample_categorical(std::span<const double> probs, double u);

// Appends argmax tokens until stop_id (which is kept) or t_max tokens.
std::vector<std::size_t> greedy_decode(DecoderState state, const ToyDecoder& decoder,
                                       std::size_t t_max, std::size_t stop_id);

// Draw t uses CounterRng(seed, t). SchemaError unless temperature > 0.
std::vector<std::size_t> sample_decode(DecoderState state, const ToyDecoder& decoder,
                                       std::size_t t_max, std::uint64_t seed, double temperature,
                                       std::optional<std::size_t> stop_id = std::nullopt);

// sum_t log pi_t[y_t] from one causal forward over context + y. 0 for empty y.
double sequence_logprob(const DecoderState& state, const ToyDecoder& decoder,
                        std::span<const std::size_t> y);

}  // namespace molgeom
