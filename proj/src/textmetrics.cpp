#include "rlqg/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace rlqg {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

}  // namespace

std::vector<Token> tokenize_with_offsets(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back({to_lower_ascii(text.substr(i, j - i)), i, j});
    i = j;
  }
  return out;
}

TokenList tokenize(std::string_view text) {
  TokenList out;
  for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.text));
  return out;
}

double cor_tokens(const TokenList& gold, const TokenList& pred) {
  if (gold.empty() && pred.empty()) return 1.0;
  if (gold.empty() || pred.empty()) return 0.0;
  std::unordered_map<std::string_view, std::size_t> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  return static_cast<double>(common) / static_cast<double>(std::max(gold.size(), pred.size()));
}

double cor(std::string_view gold, std::string_view pred) {
  return cor_tokens(tokenize(gold), tokenize(pred));
}

TokenList answer_tokens(std::string_view text) {
  TokenList t = tokenize(text);
  if (t.size() == 1 && t[0] == "none") t.clear();
  return t;
}

double cor_multi(const std::vector<std::string>& golds, std::string_view pred) {
  const TokenList p = answer_tokens(pred);
  if (golds.empty()) return cor_tokens({}, p);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, cor_tokens(answer_tokens(g), p));
  return best;
}

bool exact_match(const std::vector<std::string>& golds, std::string_view pred) {
  const TokenList p = answer_tokens(pred);
  if (golds.empty()) return p.empty();
  for (const auto& g : golds)
    if (answer_tokens(g) == p) return true;
  return false;
}

SemSimResult semsim(std::string_view a, std::string_view b, const Embedder& embedder) {
  const Eigen::VectorXd va = embedder.embed(a);
  const Eigen::VectorXd vb = embedder.embed(b);
  const double na = va.norm();
  const double nb = vb.norm();
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(va.dot(vb) / (na * nb), 0.0, 1.0), false};
}

TfidfEmbedder::TfidfEmbedder(std::vector<std::string> vocabulary, Eigen::VectorXd idf)
    : vocabulary_(std::move(vocabulary)), idf_(std::move(idf)) {
  if (static_cast<Eigen::Index>(vocabulary_.size()) != idf_.size())
    throw Error("tf-idf vocabulary and idf sizes differ");
  for (std::size_t i = 0; i < vocabulary_.size(); ++i)
    index_.emplace(vocabulary_[i], static_cast<Eigen::Index>(i));
}

Eigen::VectorXd TfidfEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(idf_.size());
  for (const auto& tok : tokenize(text)) {
    auto it = index_.find(tok);
    if (it != index_.end()) v[it->second] += 1.0;
  }
  return v.cwiseProduct(idf_);
}

std::string TfidfEmbedder::identity() const {
  return "tfidf:" + json_hash(to_json());
}

json TfidfEmbedder::to_json() const {
  json j;
  j["kind"] = "tfidf";
  j["vocabulary"] = vocabulary_;
  j["idf"] = std::vector<double>(idf_.data(), idf_.data() + idf_.size());
  return j;
}

TfidfEmbedder TfidfEmbedder::from_json(const json& doc) {
  const auto idf = doc.at("idf").get<std::vector<double>>();
  return TfidfEmbedder(doc.at("vocabulary").get<std::vector<std::string>>(),
                       Eigen::Map<const Eigen::VectorXd>(idf.data(), static_cast<Eigen::Index>(idf.size())));
}

TfidfEmbedder fit_default_embedder(const std::vector<std::string>& reference) {
  if (reference.empty()) throw Error("cannot fit an embedder on an empty reference");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : reference) {
    const TokenList toks = tokenize(doc);
    for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
  }
  std::vector<std::string> vocab;
  Eigen::VectorXd idf(static_cast<Eigen::Index>(df.size()));
  const double n = static_cast<double>(reference.size());
  Eigen::Index i = 0;
  for (const auto& [term, count] : df) {
    vocab.push_back(term);
    idf[i++] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
  }
  return TfidfEmbedder(std::move(vocab), std::move(idf));
}

}  // namespace rlqg
