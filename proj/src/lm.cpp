#include "branchforge/lm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "branchforge/errors.hpp"

namespace branchforge {

namespace {

const char* kSpecials[] = {"<|bos|>", "<|eos|>", "<|pad|>", "<|graph_pad|>",
                           "Not available", "<|sep|>"};

const char* kMarkers[] = {
    "# INSTRUCTION: generate one MiniLang check test that executes the target branch.",
    "## Module Source:",
    "## Execution Branches Information (Line to Line executed):",
    "## Branch Node Embeddings:",
    "## Invocation:",
    "lines:",
    "path:",
};

const char* kWords[] = {"def", "if", "elif", "else", "while", "return",
                        "check", "and", "or", "not", "true", "false"};

const char* kOperators[] = {"//", "<=", "==", "!=", "+", "-", "*", "%",
                            "<", "=", "(", ")", ",", ":", "?"};

const char* kIdents[] = {"a", "b", "c", "d", "f", "g", "h", "t",
                         "u", "v", "w", "x", "y", "z"};

}  // namespace

Vocab::Vocab() {
  auto push = [&](const std::string& t) {
    tokens_.push_back(t);
    return static_cast<int>(tokens_.size()) - 1;
  };
  bos = push(kSpecials[0]);
  eos = push(kSpecials[1]);
  pad = push(kSpecials[2]);
  graph_pad = push(kSpecials[3]);
  not_available = push(kSpecials[4]);
  sep = push(kSpecials[5]);
  newline = push("\n");
  indent = push("  ");
  for (const char* m : kMarkers) push(m);
  for (const char* w : kWords) push(w);
  for (const char* o : kOperators) push(o);
  for (char d = '0'; d <= '9'; ++d) push(std::string(1, d));
  for (const char* i : kIdents) push(i);

  // Fixed multi-character strings the scanner tries first, longest first.
  markers_.push_back(kSpecials[3]);
  markers_.push_back(kSpecials[4]);
  for (const char* m : kMarkers) markers_.push_back(m);
  std::sort(markers_.begin(), markers_.end(),
            [](const std::string& a, const std::string& b) {
              return a.size() > b.size();
            });
}

const Vocab& Vocab::standard() {
  static const Vocab v;
  return v;
}

int Vocab::id_of(const std::string& token) const {
  for (size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<int>(i);
  return -1;
}

std::vector<int> Vocab::encode_text(const std::string& text) const {
  std::vector<int> out;
  size_t pos = 0;
  bool line_start = true;
  while (pos < text.size()) {
    if (text[pos] == '\n') {
      out.push_back(newline);
      ++pos;
      line_start = true;
      continue;
    }
    if (line_start && text.compare(pos, 2, "  ") == 0) {
      out.push_back(indent);
      pos += 2;
      continue;
    }
    if (text[pos] == ' ') {
      ++pos;
      line_start = false;
      continue;
    }
    line_start = false;
    bool matched = false;
    for (const std::string& m : markers_) {
      if (text.compare(pos, m.size(), m) == 0) {
        out.push_back(id_of(m));
        pos += m.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    char c = text[pos];
    if (std::islower(static_cast<unsigned char>(c))) {
      size_t end = pos;
      while (end < text.size() &&
             (std::islower(static_cast<unsigned char>(text[end])) ||
              std::isdigit(static_cast<unsigned char>(text[end])) ||
              text[end] == '_'))
        ++end;
      std::string word = text.substr(pos, end - pos);
      int id = id_of(word);
      if (id < 0)
        throw UnknownToken("'" + word + "' is outside the closed vocabulary");
      out.push_back(id);
      pos = end;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      out.push_back(id_of(std::string(1, c)));
      ++pos;
      continue;
    }
    // Operators, longest first.
    static const char* two_char[] = {"//", "<=", "==", "!="};
    for (const char* op : two_char) {
      if (text.compare(pos, 2, op) == 0) {
        out.push_back(id_of(op));
        pos += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    std::string one(1, c);
    int id = id_of(one);
    if (id < 0)
      throw UnknownToken("character '" + one + "' at offset " +
                         std::to_string(pos) + " is outside the vocabulary");
    out.push_back(id);
    ++pos;
  }
  return out;
}

std::string Vocab::decode_tokens(const std::vector<int>& ids) const {
  std::string out;
  bool suppress_space = true;  // at start of text
  bool prev_digit = false;
  bool prev_sign = false;
  auto is_digit_tok = [&](const std::string& t) {
    return t.size() == 1 && std::isdigit(static_cast<unsigned char>(t[0]));
  };
  auto is_value_end = [&](const std::string& t) {
    // Tokens that can end a value or name: a binary '-' follows these.
    return is_digit_tok(t) || t == ")" || t == "true" || t == "false" ||
           (t.size() >= 1 && std::islower(static_cast<unsigned char>(t[0])) &&
            t != "and" && t != "or" && t != "not" && t != "return" &&
            t != "check" && t != "if" && t != "elif" && t != "while" &&
            t != "def" && t != "else");
  };
  std::string prev;
  for (int id : ids) {
    if (id == bos || id == pad) continue;
    if (id == eos) break;
    const std::string& t = text_of(id);
    if (id == sep || id == newline) {
      out += '\n';
      suppress_space = true;
      prev_digit = prev_sign = false;
      prev = "\n";
      continue;
    }
    if (id == indent) {
      out += "  ";
      suppress_space = true;
      prev = t;
      continue;
    }
    bool need_space = !suppress_space;
    if (t == ")" || t == "," || t == ":") need_space = false;
    if (t == "(" && is_value_end(prev)) need_space = false;  // call syntax
    if (is_digit_tok(t) && (prev_digit || prev_sign)) need_space = false;
    if (need_space) out += ' ';
    out += t;
    prev_digit = is_digit_tok(t);
    // '-' directly after an opener or operator is a numeric sign.
    prev_sign = (t == "-" && !is_value_end(prev) && !prev_digit);
    suppress_space = (t == "(") || prev_sign;
    prev = t;
  }
  return out;
}

void LmConfig::validate() const {
  if (model_dim % heads != 0)
    throw ConfigError("model_dim " + std::to_string(model_dim) +
                      " not divisible by heads " + std::to_string(heads));
  if (vocab_size <= 0) throw ConfigError("vocab_size unset");
}

PromptEncoding encode_prompt(const Vocab& vocab, const std::string& prompt_text,
                             const std::string* test_source, int max_seq) {
  PromptEncoding enc;
  enc.ids.push_back(vocab.bos);
  std::vector<int> body = vocab.encode_text(prompt_text);
  enc.ids.insert(enc.ids.end(), body.begin(), body.end());
  for (size_t i = 0; i < enc.ids.size(); ++i)
    if (enc.ids[i] == vocab.graph_pad)
      enc.graph_slot_positions.push_back(static_cast<int>(i));
  if (test_source) {
    enc.ids.push_back(vocab.sep);
    std::vector<int> target = vocab.encode_text(*test_source);
    enc.target_begin = static_cast<int>(enc.ids.size());
    enc.ids.insert(enc.ids.end(), target.begin(), target.end());
    enc.ids.push_back(vocab.eos);
    enc.target_end = static_cast<int>(enc.ids.size());
  }
  if (static_cast<int>(enc.ids.size()) > max_seq)
    throw SequenceTooLong(std::to_string(enc.ids.size()) + " tokens > max_seq " +
                          std::to_string(max_seq));
  return enc;
}

namespace {

std::string lml(int layer, const char* leaf) {
  return "lm.l" + std::to_string(layer) + "." + leaf;
}

Tensor random_tensor(int rows, int cols, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_values(rows, cols, std::move(v));
}

}  // namespace

void init_lm_params(ParameterStore& store, const LmConfig& config, Rng& rng) {
  config.validate();
  int d = config.model_dim;
  double std_d = 1.0 / std::sqrt(static_cast<double>(d));
  store.add("lm.tok_emb", random_tensor(config.vocab_size, d, 0.02, rng));
  store.add("lm.pos_emb", random_tensor(config.max_seq, d, 0.02, rng));
  for (int l = 0; l < config.layers; ++l) {
    store.add(lml(l, "ln1.g"), Tensor::from_values(1, d, std::vector<double>(d, 1.0)));
    store.add(lml(l, "ln1.b"), Tensor::zeros(1, d));
    store.add(lml(l, "wq"), random_tensor(d, d, std_d, rng));
    store.add(lml(l, "wk"), random_tensor(d, d, std_d, rng));
    store.add(lml(l, "wv"), random_tensor(d, d, std_d, rng));
    store.add(lml(l, "wo"), random_tensor(d, d, std_d, rng));
    store.add(lml(l, "ln2.g"), Tensor::from_values(1, d, std::vector<double>(d, 1.0)));
    store.add(lml(l, "ln2.b"), Tensor::zeros(1, d));
    store.add(lml(l, "ffn.w1"), random_tensor(d, config.ffn_dim, std_d, rng));
    store.add(lml(l, "ffn.b1"), Tensor::zeros(1, config.ffn_dim));
    store.add(lml(l, "ffn.w2"),
              random_tensor(config.ffn_dim, d,
                            1.0 / std::sqrt(static_cast<double>(config.ffn_dim)), rng));
    store.add(lml(l, "ffn.b2"), Tensor::zeros(1, d));
  }
  store.add("lm.lnf.g", Tensor::from_values(1, d, std::vector<double>(d, 1.0)));
  store.add("lm.lnf.b", Tensor::zeros(1, d));
  store.add("lm.head.w", random_tensor(d, config.vocab_size, std_d, rng));
  store.add("lm.head.b", Tensor::zeros(1, config.vocab_size));
}

Tensor token_embeddings(const PromptEncoding& encoding, ParameterStore& store) {
  return ops::gather_rows(store.get("lm.tok_emb"), encoding.ids);
}

Tensor inject_graph_embeddings(const Tensor& tok_embeddings,
                               const std::vector<int>& slot_positions,
                               const Tensor& branch_block) {
  if (slot_positions.empty()) {
    if (branch_block.defined() && branch_block.rows() != 0)
      throw SlotMismatch("branch rows supplied but the prompt has no slots");
    return tok_embeddings;
  }
  if (!branch_block.defined() ||
      branch_block.rows() != static_cast<int>(slot_positions.size()))
    throw SlotMismatch(std::to_string(slot_positions.size()) + " slots vs " +
                       std::to_string(branch_block.defined() ? branch_block.rows() : 0) +
                       " branch rows");
  return ops::inject_rows(tok_embeddings, slot_positions, branch_block);
}

Tensor lm_forward(const Tensor& input_embeddings, const LmConfig& config,
                  ParameterStore& store) {
  config.validate();
  int seq = input_embeddings.rows();
  if (seq > config.max_seq)
    throw SequenceTooLong(std::to_string(seq) + " > max_seq " +
                          std::to_string(config.max_seq));
  int d = config.model_dim;
  int head_dim = d / config.heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<int> positions(static_cast<size_t>(seq));
  for (int i = 0; i < seq; ++i) positions[static_cast<size_t>(i)] = i;
  Tensor x = ops::add(input_embeddings,
                      ops::gather_rows(store.get("lm.pos_emb"), positions));

  // Strictly causal additive mask.
  std::vector<double> cm(static_cast<size_t>(seq) * seq, 0.0);
  for (int i = 0; i < seq; ++i)
    for (int j = i + 1; j < seq; ++j) cm[static_cast<size_t>(i) * seq + j] = -1e30;
  Tensor causal = Tensor::from_values(seq, seq, std::move(cm));

  for (int l = 0; l < config.layers; ++l) {
    Tensor normed = ops::layer_norm(x, store.get(lml(l, "ln1.g")),
                                    store.get(lml(l, "ln1.b")));
    Tensor q = ops::matmul(normed, store.get(lml(l, "wq")));
    Tensor k = ops::matmul(normed, store.get(lml(l, "wk")));
    Tensor v = ops::matmul(normed, store.get(lml(l, "wv")));
    std::vector<Tensor> heads;
    for (int h = 0; h < config.heads; ++h) {
      Tensor qh = ops::slice_cols(q, h * head_dim, (h + 1) * head_dim);
      Tensor kh = ops::slice_cols(k, h * head_dim, (h + 1) * head_dim);
      Tensor vh = ops::slice_cols(v, h * head_dim, (h + 1) * head_dim);
      Tensor scores =
          ops::add(ops::scalar_mul(ops::matmul_nt(qh, kh), scale), causal);
      heads.push_back(ops::matmul(ops::softmax_rows(scores), vh));
    }
    Tensor attended = ops::matmul(ops::concat_cols(heads), store.get(lml(l, "wo")));
    x = ops::add(x, attended);

    Tensor normed2 = ops::layer_norm(x, store.get(lml(l, "ln2.g")),
                                     store.get(lml(l, "ln2.b")));
    Tensor hidden = ops::relu(ops::add_rowvec(
        ops::matmul(normed2, store.get(lml(l, "ffn.w1"))), store.get(lml(l, "ffn.b1"))));
    Tensor ffn_out = ops::add_rowvec(
        ops::matmul(hidden, store.get(lml(l, "ffn.w2"))), store.get(lml(l, "ffn.b2")));
    x = ops::add(x, ffn_out);
  }
  Tensor final_norm =
      ops::layer_norm(x, store.get("lm.lnf.g"), store.get("lm.lnf.b"));
  return ops::add_rowvec(ops::matmul(final_norm, store.get("lm.head.w")),
                         store.get("lm.head.b"));
}

Tensor training_loss(const PromptEncoding& encoding, const Tensor& logits) {
  if (!encoding.has_target())
    throw ConfigError("training_loss needs an encoding with a target span");
  int seq = static_cast<int>(encoding.ids.size());
  std::vector<int> targets(static_cast<size_t>(seq), 0);
  std::vector<uint8_t> mask(static_cast<size_t>(seq), 0);
  // Position p predicts token p+1; supervise the predictions of the target
  // span only.
  for (int p = encoding.target_begin - 1; p < encoding.target_end - 1; ++p) {
    targets[static_cast<size_t>(p)] = encoding.ids[static_cast<size_t>(p) + 1];
    mask[static_cast<size_t>(p)] = 1;
  }
  return ops::cross_entropy(logits, targets, mask);
}

std::string lm_decode(const Vocab& vocab, const LmConfig& config,
                      ParameterStore& store, const PromptEncoding& prompt,
                      const Tensor* branch_block, const DecodeConfig& decode) {
  PromptEncoding work = prompt;
  work.ids.push_back(vocab.sep);
  Rng rng(decode.seed);
  std::vector<int> generated;
  for (int step = 0; step < decode.max_new; ++step) {
    if (static_cast<int>(work.ids.size()) >= config.max_seq) break;
    Tensor emb = token_embeddings(work, store);
    if (!work.graph_slot_positions.empty() && branch_block)
      emb = inject_graph_embeddings(emb, work.graph_slot_positions, *branch_block);
    Tensor logits = lm_forward(emb, config, store);
    int last = logits.rows() - 1;
    int next = 0;
    if (decode.mode == DecodeConfig::Mode::Greedy) {
      double best = logits.at(last, 0);
      for (int t = 1; t < logits.cols(); ++t)
        if (logits.at(last, t) > best) {
          best = logits.at(last, t);
          next = t;
        }
    } else {
      double temp = std::max(1e-6, decode.temperature);
      std::vector<double> p(static_cast<size_t>(logits.cols()));
      double mx = -1e300;
      for (int t = 0; t < logits.cols(); ++t)
        mx = std::max(mx, logits.at(last, t) / temp);
      double sum = 0.0;
      for (int t = 0; t < logits.cols(); ++t) {
        p[static_cast<size_t>(t)] = std::exp(logits.at(last, t) / temp - mx);
        sum += p[static_cast<size_t>(t)];
      }
      double x = rng.uniform_real() * sum;
      double acc = 0.0;
      next = logits.cols() - 1;
      for (int t = 0; t < logits.cols(); ++t) {
        acc += p[static_cast<size_t>(t)];
        if (x < acc) {
          next = t;
          break;
        }
      }
    }
    if (next == vocab.eos) break;
    generated.push_back(next);
    work.ids.push_back(next);
  }
  return vocab.decode_tokens(generated);
}

}  // namespace branchforge
