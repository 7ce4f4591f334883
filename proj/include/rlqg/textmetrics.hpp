#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rlqg/common.hpp"

namespace rlqg {

using TokenList = std::vector<std::string>;

/// A lowercase token with its byte span [start, end) in the source text.
struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Lowercased maximal runs of letters/digits; everything else is dropped.
/// Bytes >= 0x80 count as letters so UTF-8 words stay whole.
TokenList tokenize(std::string_view text);
std::vector<Token> tokenize_with_offsets(std::string_view text);

/// Context overlap ratio over token multisets:
///   |a ∩ â| / max(|a|, |â|), both empty -> 1, exactly one empty -> 0.
double cor_tokens(const TokenList& gold, const TokenList& pred);
double cor(std::string_view gold, std::string_view pred);

/// Answer-level tokens: a lone "none" token denotes the empty answer.
TokenList answer_tokens(std::string_view text);

/// Best cor over alternatives; an empty gold list is the unanswerable answer.
double cor_multi(const std::vector<std::string>& golds, std::string_view pred);

/// Token-sequence equality with any gold (unanswerable matches only None).
bool exact_match(const std::vector<std::string>& golds, std::string_view pred);

/// Text -> fixed-length vector. Equal texts map to equal vectors.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
  virtual Eigen::Index dimension() const = 0;
  virtual std::string identity() const = 0;
};

struct SemSimResult {
  double value = 0.0;
  bool degenerate = false;  // a side embedded to the zero vector
};

/// Cosine similarity clamped to [0, 1].
SemSimResult semsim(std::string_view a, std::string_view b, const Embedder& embedder);

/// Sparse tf-idf vectors over a fixed reference vocabulary, stored densely.
/// tf is the raw count; idf = ln((1 + N) / (1 + df)) + 1.
class TfidfEmbedder final : public Embedder {
 public:
  TfidfEmbedder() = default;
  TfidfEmbedder(std::vector<std::string> vocabulary, Eigen::VectorXd idf);

  Eigen::VectorXd embed(std::string_view text) const override;
  Eigen::Index dimension() const override { return idf_.size(); }
  std::string identity() const override;

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const Eigen::VectorXd& idf() const { return idf_; }

  json to_json() const;
  static TfidfEmbedder from_json(const json& doc);

 private:
  std::vector<std::string> vocabulary_;
  std::map<std::string, Eigen::Index, std::less<>> index_;
  Eigen::VectorXd idf_;
};

/// Fits the default embedder on `reference` documents (throws if empty).
TfidfEmbedder fit_default_embedder(const std::vector<std::string>& reference);

}  // namespace rlqg
