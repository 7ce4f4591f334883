#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "rlqg/common.hpp"

namespace rlqg {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

/// Word-level model tokens: whitespace-separated words, with each of
/// . , ? ! ; : ( ) " split off as its own token. Case is kept. A reserved
/// symbol such as "<unk>" stays one token.
std::vector<std::string> model_tokenize(std::string_view text);
/// Inverse of model_tokenize up to whitespace: no space before closing
/// punctuation or after "(".
std::string detokenize(const std::vector<std::string>& tokens);

class Vocab {
 public:
  /// Reserved symbols only: <pad>, <bos>, <eos>, <unk> at ids 0..3.
  Vocab();
  /// `tokens` must start with the four reserved symbols and hold no duplicates.
  explicit Vocab(std::vector<std::string> tokens);
  /// Reserved symbols followed by every model token of `texts`, sorted.
  static Vocab build(const std::vector<std::string>& texts);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Stops at EOS; drops PAD and BOS.
  std::string decode(std::span<const int> ids) const;

  json to_json() const { return tokens_; }
  static Vocab from_json(const json& doc);
  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct ModelDims {
  int vocab = 0;
  int embed = 0;
  int hidden = 0;
  bool operator==(const ModelDims&) const = default;
};

/// GRU encoder-decoder parameters. The embedding table is shared by encoder
/// and decoder; the decoder reads [embedding(prev); encoder state] each step.
/// Gate rows are stacked as [update; reset; candidate].
template <typename Scalar>
struct PolicyParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ModelDims dims;
  Matrix embedding;  // V x D
  Matrix enc_wx;     // 3H x D
  Matrix enc_wh;     // 3H x H
  Vector enc_b;      // 3H
  Matrix dec_wx;     // 3H x (D + H)
  Matrix dec_wh;     // 3H x H
  Vector dec_b;      // 3H
  Matrix out_w;      // V x H
  Vector out_b;      // V

  static PolicyParams zeros(const ModelDims& d) {
    PolicyParams p;
    p.dims = d;
    const int h3 = 3 * d.hidden;
    p.embedding = Matrix::Zero(d.vocab, d.embed);
    p.enc_wx = Matrix::Zero(h3, d.embed);
    p.enc_wh = Matrix::Zero(h3, d.hidden);
    p.enc_b = Vector::Zero(h3);
    p.dec_wx = Matrix::Zero(h3, d.embed + d.hidden);
    p.dec_wh = Matrix::Zero(h3, d.hidden);
    p.dec_b = Vector::Zero(h3);
    p.out_w = Matrix::Zero(d.vocab, d.hidden);
    p.out_b = Vector::Zero(d.vocab);
    return p;
  }

  /// Uniform init: embeddings in ±0.1, recurrent weights in ±1/sqrt(fan-in),
  /// output weights in ±0.01 so the initial next-token distribution is close
  /// to uniform. Biases start at zero.
  static PolicyParams random(const ModelDims& d, std::uint64_t seed) {
    PolicyParams p = zeros(d);
    std::mt19937_64 engine(seed);
    auto fill = [&](auto& m, double scale) {
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<Scalar>((2.0 * uniform01(engine) - 1.0) * scale);
    };
    fill(p.embedding, 0.1);
    fill(p.enc_wx, 1.0 / std::sqrt(static_cast<double>(d.embed)));
    fill(p.enc_wh, 1.0 / std::sqrt(static_cast<double>(d.hidden)));
    fill(p.dec_wx, 1.0 / std::sqrt(static_cast<double>(d.embed + d.hidden)));
    fill(p.dec_wh, 1.0 / std::sqrt(static_cast<double>(d.hidden)));
    fill(p.out_w, 0.01);
    return p;
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("embedding", self.embedding);
    f("enc_wx", self.enc_wx);
    f("enc_wh", self.enc_wh);
    f("enc_b", self.enc_b);
    f("dec_wx", self.dec_wx);
    f("dec_wh", self.dec_wh);
    f("dec_b", self.dec_b);
    f("out_w", self.out_w);
    f("out_b", self.out_b);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  /// f(mine, theirs) over matching tensors.
  template <typename Self, typename Other, typename F>
  static void zip_visit(Self& self, Other& other, F&& f) {
    f(self.embedding, other.embedding);
    f(self.enc_wx, other.enc_wx);
    f(self.enc_wh, other.enc_wh);
    f(self.enc_b, other.enc_b);
    f(self.dec_wx, other.dec_wx);
    f(self.dec_wh, other.dec_wh);
    f(self.dec_b, other.dec_b);
    f(self.out_w, other.out_w);
    f(self.out_b, other.out_b);
  }
  template <typename Other, typename F>
  void zip(Other& other, F&& f) { zip_visit(*this, other, f); }
  template <typename Other, typename F>
  void zip(Other& other, F&& f) const { zip_visit(*this, other, f); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const char*, const auto& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const auto& m) { ok = ok && m.allFinite(); });
    return ok;
  }
  Scalar squared_norm() const {
    Scalar s(0);
    for_each([&](const char*, const auto& m) { s += m.squaredNorm(); });
    return s;
  }
  void set_zero() {
    for_each([](const char*, auto& m) { m.setZero(); });
  }
  void scale(Scalar k) {
    for_each([&](const char*, auto& m) { m *= k; });
  }
  /// this += k * other
  void add_scaled(const PolicyParams& other, Scalar k) {
    zip(other, [&](auto& a, const auto& b) { a += k * b; });
  }
  template <typename T>
  PolicyParams<T> cast() const {
    PolicyParams<T> p;
    p.dims = dims;
    p.zip(*this, [](auto& a, const auto& b) { a = b.template cast<T>(); });
    return p;
  }
  bool operator==(const PolicyParams& o) const {
    bool eq = dims == o.dims;
    zip(o, [&](const auto& a, const auto& b) {
      eq = eq && a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    });
    return eq;
  }
};

// ---------------------------------------------------------------------------
// Forward and backward passes.

template <typename Scalar>
struct GruStep {
  using Vector = typename PolicyParams<Scalar>::Vector;
  Vector x, h_prev, z, r, n, hn, h;  // hn = candidate rows of W_h h_prev
};

template <typename Scalar>
struct EncoderTrace {
  std::vector<GruStep<Scalar>> steps;  // steps[k] reads src[size - 1 - k]
  typename PolicyParams<Scalar>::Vector context;  // final state (zero for empty input)
};

template <typename Scalar>
struct DecoderTrace {
  std::vector<int> inputs;
  std::vector<GruStep<Scalar>> steps;
};

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-x)) : exp(x) / (Scalar(1) + exp(x));
}

template <typename Scalar, typename Wx, typename Wh, typename B, typename X, typename H>
GruStep<Scalar> gru_forward(const Wx& wx, const Wh& wh, const B& b, const X& x, const H& h_prev) {
  const Eigen::Index hs = h_prev.size();
  GruStep<Scalar> s;
  s.x = x;
  s.h_prev = h_prev;
  const typename PolicyParams<Scalar>::Vector a = wx * x + b;
  const typename PolicyParams<Scalar>::Vector u = wh * h_prev;
  s.z = (a.segment(0, hs) + u.segment(0, hs)).unaryExpr([](Scalar v) { return sigmoid(v); });
  s.r = (a.segment(hs, hs) + u.segment(hs, hs)).unaryExpr([](Scalar v) { return sigmoid(v); });
  s.hn = u.segment(2 * hs, hs);
  s.n = (a.segment(2 * hs, hs) + s.r.cwiseProduct(s.hn)).array().tanh().matrix();
  s.h = (Scalar(1) - s.z.array()).matrix().cwiseProduct(s.n) + s.z.cwiseProduct(h_prev);
  return s;
}

/// Accumulates weight gradients; returns (dx, dh_prev).
template <typename Scalar, typename Wx, typename Wh, typename DWx, typename DWh, typename DB>
std::pair<typename PolicyParams<Scalar>::Vector, typename PolicyParams<Scalar>::Vector>
gru_backward(const Wx& wx, const Wh& wh, const GruStep<Scalar>& s,
             const typename PolicyParams<Scalar>::Vector& dh, DWx& dwx, DWh& dwh, DB& db) {
  using Vector = typename PolicyParams<Scalar>::Vector;
  const Eigen::Index hs = dh.size();
  const Vector dn = dh.cwiseProduct((Scalar(1) - s.z.array()).matrix());
  const Vector dz = dh.cwiseProduct(s.h_prev - s.n);
  Vector dh_prev = dh.cwiseProduct(s.z);
  const Vector da_n = dn.cwiseProduct((Scalar(1) - s.n.array().square()).matrix());
  const Vector dr = da_n.cwiseProduct(s.hn);
  Vector ga(3 * hs), gu(3 * hs);
  ga.segment(0, hs) = dz.cwiseProduct(s.z.cwiseProduct((Scalar(1) - s.z.array()).matrix()));
  ga.segment(hs, hs) = dr.cwiseProduct(s.r.cwiseProduct((Scalar(1) - s.r.array()).matrix()));
  ga.segment(2 * hs, hs) = da_n;
  gu.segment(0, 2 * hs) = ga.segment(0, 2 * hs);
  gu.segment(2 * hs, hs) = da_n.cwiseProduct(s.r);
  dwx.noalias() += ga * s.x.transpose();
  dwh.noalias() += gu * s.h_prev.transpose();
  db += ga;
  dh_prev.noalias() += wh.transpose() * gu;
  Vector dx = wx.transpose() * ga;
  return {std::move(dx), std::move(dh_prev)};
}

}  // namespace detail

template <typename Scalar>
EncoderTrace<Scalar> encode(const PolicyParams<Scalar>& p, std::span<const int> src) {
  EncoderTrace<Scalar> t;
  typename PolicyParams<Scalar>::Vector h = PolicyParams<Scalar>::Vector::Zero(p.dims.hidden);
  t.steps.reserve(src.size());
  // Right to left, so the role and trigger at the head of the prompt are
  // read last and sit closest to the decoder.
  for (auto it = src.rbegin(); it != src.rend(); ++it) {
    const int tok = *it;
    t.steps.push_back(detail::gru_forward<Scalar>(p.enc_wx, p.enc_wh, p.enc_b,
                                                  p.embedding.row(tok).transpose(), h));
    h = t.steps.back().h;
  }
  t.context = std::move(h);
  return t;
}

template <typename Scalar>
typename PolicyParams<Scalar>::Vector decoder_input(const PolicyParams<Scalar>& p, int token,
                                                    const typename PolicyParams<Scalar>::Vector& context) {
  typename PolicyParams<Scalar>::Vector x(p.dims.embed + p.dims.hidden);
  x.head(p.dims.embed) = p.embedding.row(token).transpose();
  x.tail(p.dims.hidden) = context;
  return x;
}

/// One decoder step from state `h` after reading `token`.
template <typename Scalar>
GruStep<Scalar> decoder_step(const PolicyParams<Scalar>& p,
                             const typename PolicyParams<Scalar>::Vector& context,
                             const typename PolicyParams<Scalar>::Vector& h, int token) {
  return detail::gru_forward<Scalar>(p.dec_wx, p.dec_wh, p.dec_b, decoder_input(p, token, context), h);
}

/// Teacher-forced decoder run: the initial state is the context and
/// `inputs[t]` is read at step t.
template <typename Scalar>
DecoderTrace<Scalar> decode_trace(const PolicyParams<Scalar>& p,
                                  const typename PolicyParams<Scalar>::Vector& context,
                                  std::span<const int> inputs) {
  DecoderTrace<Scalar> t;
  t.inputs.assign(inputs.begin(), inputs.end());
  t.steps.reserve(inputs.size());
  typename PolicyParams<Scalar>::Vector h = context;
  for (int tok : inputs) {
    t.steps.push_back(decoder_step(p, context, h, tok));
    h = t.steps.back().h;
  }
  return t;
}

/// Next-token log-probabilities; PAD and BOS are masked to -inf.
template <typename Scalar>
typename PolicyParams<Scalar>::Vector next_log_probs(const PolicyParams<Scalar>& p,
                                                     const typename PolicyParams<Scalar>::Vector& h) {
  typename PolicyParams<Scalar>::Vector logits = p.out_w * h + p.out_b;
  logits[kPad] = -std::numeric_limits<Scalar>::infinity();
  logits[kBos] = -std::numeric_limits<Scalar>::infinity();
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Backpropagates per-step state gradients through the decoder. Returns the
/// gradient with respect to the context vector (initial state and input).
template <typename Scalar>
typename PolicyParams<Scalar>::Vector backward_decoder(
    const PolicyParams<Scalar>& p, const DecoderTrace<Scalar>& trace,
    const std::vector<typename PolicyParams<Scalar>::Vector>& dstates, PolicyParams<Scalar>& g) {
  using Vector = typename PolicyParams<Scalar>::Vector;
  const int d = p.dims.embed;
  Vector dcontext = Vector::Zero(p.dims.hidden);
  Vector dh = Vector::Zero(p.dims.hidden);
  for (std::size_t k = trace.steps.size(); k-- > 0;) {
    dh += dstates[k];
    auto [dx, dprev] =
        detail::gru_backward<Scalar>(p.dec_wx, p.dec_wh, trace.steps[k], dh, g.dec_wx, g.dec_wh, g.dec_b);
    g.embedding.row(trace.inputs[k]) += dx.head(d).transpose();
    dcontext += dx.tail(p.dims.hidden);
    dh = std::move(dprev);
  }
  return dcontext + dh;
}

template <typename Scalar>
void backward_encoder(const PolicyParams<Scalar>& p, std::span<const int> src,
                      const EncoderTrace<Scalar>& trace,
                      const typename PolicyParams<Scalar>::Vector& dcontext, PolicyParams<Scalar>& g) {
  typename PolicyParams<Scalar>::Vector dh = dcontext;
  for (std::size_t k = trace.steps.size(); k-- > 0;) {
    auto [dx, dprev] =
        detail::gru_backward<Scalar>(p.enc_wx, p.enc_wh, trace.steps[k], dh, g.enc_wx, g.enc_wh, g.enc_b);
    g.embedding.row(src[src.size() - 1 - k]) += dx.transpose();
    dh = std::move(dprev);
  }
}

/// Decoder pass over one target continuation given an encoded prompt.
/// `target` holds the emitted tokens (ending in EOS when complete); inputs are
/// [BOS, target[0..T-2]]. Returns per-token log-probabilities. When `coeffs`
/// is non-empty, accumulates the gradient of  -sum_t coeffs[t] * logp[t]
/// into `g` and adds the context gradient to `dcontext`.
template <typename Scalar>
std::vector<Scalar> target_pass(const PolicyParams<Scalar>& p,
                                const typename PolicyParams<Scalar>::Vector& context,
                                std::span<const int> target, std::span<const Scalar> coeffs,
                                PolicyParams<Scalar>* g,
                                typename PolicyParams<Scalar>::Vector* dcontext) {
  using Vector = typename PolicyParams<Scalar>::Vector;
  std::vector<int> inputs;
  inputs.reserve(target.size());
  inputs.push_back(kBos);
  for (std::size_t t = 0; t + 1 < target.size(); ++t) inputs.push_back(target[t]);
  if (target.empty()) return {};
  const DecoderTrace<Scalar> trace = decode_trace(p, context, inputs);
  std::vector<Scalar> logp(target.size());
  std::vector<Vector> dstates;
  const bool grad = g != nullptr && !coeffs.empty();
  if (grad) dstates.reserve(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) {
    const Vector lp = next_log_probs(p, trace.steps[t].h);
    logp[t] = lp[target[t]];
    if (!grad) continue;
    Vector dlogits = lp.array().exp().matrix() * coeffs[t];
    dlogits[target[t]] -= coeffs[t];
    g->out_w.noalias() += dlogits * trace.steps[t].h.transpose();
    g->out_b += dlogits;
    dstates.push_back(p.out_w.transpose() * dlogits);
  }
  if (grad) *dcontext += backward_decoder(p, trace, dstates, *g);
  return logp;
}

/// Weighted negative log-likelihood of several continuations of one prompt,
/// sharing a single encoder pass. Accumulates gradients into `g` when given.
/// Returns sum over sequences and tokens of coeffs * (-logp); per-token
/// log-probabilities are written to `token_logp` when given.
template <typename Scalar>
Scalar prompt_group_loss(const PolicyParams<Scalar>& p, std::span<const int> src,
                         const std::vector<std::vector<int>>& targets,
                         const std::vector<std::vector<Scalar>>& coeffs, PolicyParams<Scalar>* g,
                         std::vector<std::vector<Scalar>>* token_logp = nullptr) {
  using Vector = typename PolicyParams<Scalar>::Vector;
  const EncoderTrace<Scalar> enc = encode(p, src);
  Vector dcontext = Vector::Zero(p.dims.hidden);
  Scalar loss(0);
  if (token_logp) token_logp->assign(targets.size(), {});
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto lp = target_pass<Scalar>(p, enc.context, targets[i], coeffs[i], g, &dcontext);
    for (std::size_t t = 0; t < lp.size(); ++t) loss -= coeffs[i][t] * lp[t];
    if (token_logp) (*token_logp)[i] = lp;
  }
  if (g) backward_encoder(p, src, enc, dcontext, *g);
  return loss;
}

/// Sum of log-probabilities of `target` (as given, EOS included only if present).
template <typename Scalar>
Scalar sequence_log_prob(const PolicyParams<Scalar>& p, std::span<const int> src,
                         std::span<const int> target) {
  const EncoderTrace<Scalar> enc = encode(p, src);
  Scalar s(0);
  for (Scalar v : target_pass<Scalar>(p, enc.context, target, {}, nullptr, nullptr)) s += v;
  return s;
}

// ---------------------------------------------------------------------------
// Gradient checking.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = -1;
  std::size_t checked = 0;
};

/// Central finite differences on every scalar of `params` (any type with
/// for_each over Eigen tensors), compared against `analytic`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
template <typename Params, typename LossFn>
GradCheckResult finite_difference_check(Params params, const Params& analytic, LossFn&& loss,
                                        double epsilon) {
  std::vector<const double*> grads;
  analytic.for_each([&](const char*, const auto& m) { grads.push_back(m.data()); });
  GradCheckResult res;
  std::size_t tensor = 0;
  params.for_each([&](const char* name, auto& m) {
    const double* a = grads[tensor++];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + epsilon;
      const double up = loss(params);
      m.data()[i] = saved - epsilon;
      const double down = loss(params);
      m.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err =
          std::abs(a[i] - numeric) / std::max({std::abs(a[i]), std::abs(numeric), 1e-6});
      ++res.checked;
      if (!(err <= res.max_rel_error)) {
        res.max_rel_error = err;
        res.worst_tensor = name;
        res.worst_index = i;
      }
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Policy, configs, training and decoding (double precision).

using Params = PolicyParams<double>;

struct Policy {
  Vocab vocab;
  Params params;

  static Policy create(Vocab vocab, int embed, int hidden, std::uint64_t seed);

  /// Checkpoint container: format tag, version, dims, per-tensor shape
  /// manifest, vocab and flattened column-major values. `extra` keys are
  /// merged at top level.
  json to_json(const json& extra = json::object()) const;
  /// Validates every tensor against the manifest and the dims.
  static Policy from_json(const json& doc);
  void save(const std::filesystem::path& path, const json& extra = json::object()) const;
  static Policy load(const std::filesystem::path& path);
};

/// Writes/reads a parameter set in the checkpoint tensor layout.
json params_to_json(const Params& p);
Params params_from_json(const json& doc, const ModelDims& dims);

struct TrainConfig {
  std::string name = "toy-sft";
  double learning_rate = 0.3;
  int epochs = 60;
  int batch_size = 16;
  int grad_accum = 1;
  double grad_clip = 5.0;
  std::uint64_t seed = 42;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& doc, const TrainConfig& defaults);
  static TrainConfig from_json(const json& doc) { return from_json(doc, TrainConfig{}); }
  /// toy-sft, toy-rm, toy-ppo, paper-sft, paper-rl, paper-rm.
  static TrainConfig preset(std::string_view name);
};

struct DecodeConfig {
  int max_length = 32;  // emitted tokens, EOS included
  double temperature = 0.6;
  double top_p = 0.9;
  int beam_size = 10;
  int num_return = 5;
  std::uint64_t seed = 42;
  bool greedy = false;

  void validate() const;
  json to_json() const;
  static DecodeConfig from_json(const json& doc, const DecodeConfig& defaults);
  static DecodeConfig from_json(const json& doc) { return from_json(doc, DecodeConfig{}); }
};

/// A decoded continuation. `ids` excludes the final EOS; `finished` tells
/// whether EOS was emitted. `log_prob` includes the EOS term when finished.
struct Generation {
  std::vector<int> ids;
  bool finished = false;
  double log_prob = 0.0;

  std::vector<int> target() const;  // ids plus EOS when finished
};

struct BeamResult {
  std::vector<Generation> hypotheses;  // sorted by descending log_prob
  bool short_list = false;             // fewer than num_return completed
};

Generation greedy_decode(const Params& p, std::span<const int> src, int max_length);
/// Temperature, then nucleus truncation, then renormalization. `greedy`
/// selects argmax decoding instead.
Generation sample_ids(const Params& p, std::span<const int> src, const DecodeConfig& cfg,
                      std::mt19937_64& engine);
/// Completed (EOS-terminated) hypotheses only, at most num_return, distinct.
BeamResult beam_search_ids(const Params& p, std::span<const int> src, const DecodeConfig& cfg);

double log_prob(const Policy& policy, std::string_view prompt, std::string_view output);
std::string sample(const Policy& policy, std::string_view prompt, const DecodeConfig& cfg);
std::vector<std::pair<std::string, double>> beam_search(const Policy& policy, std::string_view prompt,
                                                        const DecodeConfig& cfg, bool* short_list = nullptr);

struct SftReport {
  double initial_loss = 0.0;       // per token, before any update
  std::vector<double> epoch_loss;  // per token, averaged over each epoch
  std::size_t steps = 0;
};

/// Minimizes summed token cross-entropy with SGD and global-norm clipping.
/// Pairs sharing a prompt are trained as one group (one encoder pass); a
/// batch is `batch_size` groups. Group order is shuffled per epoch from the
/// config seed. Throws TrainingError on a non-finite loss.
SftReport sft_train(Policy& policy, const std::vector<std::pair<std::string, std::string>>& pairs,
                    const TrainConfig& cfg);

/// Mean per-token cross-entropy over pairs.
double mean_token_loss(const Policy& policy,
                       const std::vector<std::pair<std::string, std::string>>& pairs);

/// Rescales `g` so its global norm is at most `max_norm`; returns the norm before.
template <typename Grads>
double clip_global_norm(Grads& g, double max_norm) {
  double sq = 0.0;
  g.for_each([&](const char*, const auto& m) { sq += m.squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    g.for_each([&](const char*, auto& m) { m *= k; });
  }
  return norm;
}

/// Cross-entropy gradient check on a batch of (prompt ids, target ids).
GradCheckResult grad_check(const Params& p,
                           const std::vector<std::pair<std::vector<int>, std::vector<int>>>& batch,
                           double epsilon);

}  // namespace rlqg
