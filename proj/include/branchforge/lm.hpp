#pragma once

#include <optional>
#include <string>
#include <vector>

#include "branchforge/rng.hpp"
#include "branchforge/tensor.hpp"

namespace branchforge {

// Closed vocabulary: MiniLang lexemes, digit/sign composition for integers,
// the fixed prompt-section markers, and special tokens. Unknown surface text
// raises UnknownToken; the prompt renderer only emits covered strings.
class Vocab {
 public:
  Vocab();
  static const Vocab& standard();

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& text_of(int id) const { return tokens_[static_cast<size_t>(id)]; }
  int id_of(const std::string& token) const;  // -1 when absent

  int bos, eos, pad, graph_pad, not_available, sep, newline, indent;

  // Scans surface text into token ids. Integers become digit runs (with a
  // leading minus token when negative); two leading spaces at line starts
  // become indent tokens; fixed marker strings match greedily.
  std::vector<int> encode_text(const std::string& text) const;
  // Inverse rendering with canonical spacing; encode-then-decode is identity
  // on canonically rendered MiniLang and check lines.
  std::string decode_tokens(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> markers_;  // multi-char fixed strings, longest first
};

struct LmConfig {
  int layers = 4;
  int model_dim = 64;
  int heads = 4;
  int max_seq = 512;
  int ffn_dim = 256;
  int vocab_size = 0;  // filled from the vocab
  int graph_slots = 32;

  void validate() const;
};

struct PromptEncoding {
  std::vector<int> ids;                  // BOS + prompt [+ SEP + target + EOS]
  std::vector<int> graph_slot_positions; // empty or exactly graph_slots long
  int target_begin = -1;                 // [begin, end) over ids
  int target_end = -1;

  bool has_target() const { return target_begin >= 0; }
};

// Tokenizes a rendered prompt; locates the graph-pad run; when test_source
// is given (training) appends SEP + its tokens + EOS and marks the span.
PromptEncoding encode_prompt(const Vocab& vocab, const std::string& prompt_text,
                             const std::string* test_source, int max_seq);

void init_lm_params(ParameterStore& store, const LmConfig& config, Rng& rng);

// Embedding rows for the encoded ids (no positional term yet).
Tensor token_embeddings(const PromptEncoding& encoding, ParameterStore& store);

// Replaces the rows at the graph-pad positions with the branch-embedding
// rows; other rows pass through untouched, and gradients flow into both
// sources. Slot/row count disagreement raises SlotMismatch.
Tensor inject_graph_embeddings(const Tensor& tok_embeddings,
                               const std::vector<int>& slot_positions,
                               const Tensor& branch_block);

// Causal decoder stack over the input embeddings (positional encodings are
// added inside, after any slot substitution): per-position logits over the
// vocabulary. Sequences beyond max_seq raise SequenceTooLong.
Tensor lm_forward(const Tensor& input_embeddings, const LmConfig& config,
                  ParameterStore& store);

// Mean next-token cross-entropy restricted to the target span.
Tensor training_loss(const PromptEncoding& encoding, const Tensor& logits);

struct DecodeConfig {
  enum class Mode { Greedy, Temperature };
  Mode mode = Mode::Greedy;
  double temperature = 0.2;
  int max_new = 64;
  uint64_t seed = 0;
};

// Autoregressive generation from a target-free encoding. Returns the decoded
// token text (which may fail to parse as a test; that is the caller's
// concern, never an exception here).
std::string lm_decode(const Vocab& vocab, const LmConfig& config,
                      ParameterStore& store, const PromptEncoding& prompt,
                      const Tensor* branch_block, const DecodeConfig& decode);

}  // namespace branchforge
