#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <regex>
#include <thread>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "rlqg/backends.hpp"

#include <httplib.h>

namespace rlqg {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) throw ConfigError("invalid endpoint URL '" + url + "'");
  std::string prefix = m[2].str();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CallOutcome {
  std::optional<json> body;
  int attempts = 0;
  double latency_ms = 0.0;
  std::string diagnostic;
};

// POST with retries and cassette record/replay. Thread-safe.
class HttpCaller {
 public:
  explicit HttpCaller(BackendConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.endpoint.empty()) endpoint_ = parse_endpoint(cfg_.endpoint);
    if (!cfg_.cassette_path.empty() && std::filesystem::exists(cfg_.cassette_path)) {
      for (const auto& [line, rec] : read_jsonl(cfg_.cassette_path)) {
        if (!rec.contains("request_hash") || !rec.contains("response"))
          throw ConfigError(cfg_.cassette_path + ":" + std::to_string(line) + ": malformed cassette entry");
        cassette_.emplace(rec.at("request_hash").get<std::string>(), rec.at("response"));
      }
    }
  }

  CallOutcome post(const std::string& path, const json& body, const json& transcript) {
    const std::string hash = sha256_hex(body.dump());
    {
      std::lock_guard lock(mu_);
      if (auto it = cassette_.find(hash); it != cassette_.end()) return {it->second, 0, 0.0, {}};
    }
    if (cfg_.offline) return {std::nullopt, 0, 0.0, "offline mode: no cassette entry for request " + hash.substr(0, 16)};
    if (cfg_.endpoint.empty()) return {std::nullopt, 0, 0.0, "no endpoint configured"};

    CallOutcome out;
    const auto start = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(cfg_.retry_backoff_seconds * (1 << (attempt - 1))));
      out.attempts = attempt + 1;
      httplib::Client cli(endpoint_.origin);
      const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
      const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      httplib::Headers headers;
      if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
      auto res = cli.Post(endpoint_.prefix + path, headers, body.dump(), "application/json");
      if (!res) {
        out.diagnostic = "request failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        out.diagnostic = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        out.diagnostic = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        break;
      }
      try {
        out.body = json::parse(res->body);
      } catch (const json::exception& e) {
        out.diagnostic = std::string("unparseable response: ") + e.what();
        break;
      }
      out.diagnostic.clear();
      record(hash, transcript, *out.body);
      break;
    }
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!out.body && out.diagnostic.empty()) out.diagnostic = "no response";
    return out;
  }

  const BackendConfig& config() const { return cfg_; }

 private:
  void record(const std::string& hash, const json& transcript, const json& response) {
    std::lock_guard lock(mu_);
    cassette_.emplace(hash, response);
    if (cfg_.cassette_path.empty()) return;
    const std::filesystem::path path(cfg_.cassette_path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::app);
    const json entry = {{"request_hash", hash},
                        {"transcript", transcript},
                        {"response", response},
                        {"timestamp", utc_timestamp()}};
    f << entry.dump() << "\n";
  }

  BackendConfig cfg_;
  Endpoint endpoint_;
  std::mutex mu_;
  std::map<std::string, json> cassette_;
};

}  // namespace

struct RemoteBackend::Impl {
  explicit Impl(BackendConfig cfg) : caller(std::move(cfg)) {}
  HttpCaller caller;
};

RemoteBackend::RemoteBackend(BackendConfig cfg) {
  cfg.kind = BackendKind::remote;
  cfg.validate();
  impl_ = std::make_unique<Impl>(std::move(cfg));
}

RemoteBackend::~RemoteBackend() = default;

json RemoteBackend::request_body(const ChatTranscript& transcript, int n) const {
  const BackendConfig& c = impl_->caller.config();
  json body = {{"model", c.model},
               {"messages", transcript.to_json()},
               {"temperature", c.temperature},
               {"top_p", c.top_p},
               {"max_tokens", c.max_tokens}};
  if (n > 1) body["n"] = n;
  return body;
}

GenerationResult RemoteBackend::generate(const ChatTranscript& transcript) const {
  GenerationResult r;
  if (!transcript.valid()) {
    r.finish = FinishReason::error;
    r.diagnostic = "invalid transcript";
    return r;
  }
  const json body = request_body(transcript);
  const CallOutcome out = impl_->caller.post("/chat/completions", body, body.at("messages"));
  r.attempts = out.attempts;
  r.latency_ms = out.latency_ms;
  if (!out.body) {
    r.finish = FinishReason::error;
    r.diagnostic = out.diagnostic;
    return r;
  }
  try {
    const json& choice = out.body->at("choices").at(0);
    r.text = choice.at("message").at("content").get<std::string>();
    r.finish = choice.value("finish_reason", "stop") == "length" ? FinishReason::length : FinishReason::stop;
  } catch (const json::exception& e) {
    r.finish = FinishReason::error;
    r.diagnostic = std::string("unexpected response shape: ") + e.what();
  }
  return r;
}

std::vector<std::string> RemoteBackend::candidates(const ChatTranscript& transcript,
                                                   const DecodeConfig& decode) const {
  const json body = request_body(transcript, decode.num_return);
  const CallOutcome out = impl_->caller.post("/chat/completions", body, body.at("messages"));
  if (!out.body) throw BackendError(out.diagnostic);
  std::vector<std::string> texts;
  try {
    for (const auto& choice : out.body->at("choices")) {
      std::string t = choice.at("message").at("content").get<std::string>();
      if (std::find(texts.begin(), texts.end(), t) == texts.end()) texts.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("unexpected response shape: ") + e.what());
  }
  return texts;
}

std::string RemoteBackend::identity() const {
  const BackendConfig& c = impl_->caller.config();
  return "remote:" + c.endpoint + "#" + c.model;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd embedding_call(HttpCaller& caller, std::string_view text) {
  if (text.empty()) throw BackendError("cannot embed empty text");
  const BackendConfig& c = caller.config();
  const json body = {{"model", c.embedding_model.empty() ? c.model : c.embedding_model},
                     {"input", std::string(text)}};
  const CallOutcome out = caller.post("/embeddings", body, body.at("input"));
  if (!out.body) throw BackendError("embedding request failed: " + out.diagnostic);
  try {
    const auto v = out.body->at("data").at(0).at("embedding").get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } catch (const json::exception& e) {
    throw BackendError(std::string("unexpected embedding response: ") + e.what());
  }
}

}  // namespace

struct RemoteEmbedder::Impl {
  explicit Impl(BackendConfig cfg) : caller(std::move(cfg)) {}
  HttpCaller caller;
  mutable std::mutex mu;
  Eigen::Index dim = -1;
};

RemoteEmbedder::RemoteEmbedder(BackendConfig cfg) {
  cfg.kind = BackendKind::remote;
  cfg.validate();
  impl_ = std::make_unique<Impl>(std::move(cfg));
}

RemoteEmbedder::~RemoteEmbedder() = default;

Eigen::VectorXd RemoteEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd v = embedding_call(impl_->caller, text);
  std::lock_guard lock(impl_->mu);
  if (impl_->dim < 0) impl_->dim = v.size();
  else if (v.size() != impl_->dim)
    throw BackendError("embedding dimension changed from " + std::to_string(impl_->dim) + " to " +
                       std::to_string(v.size()));
  return v;
}

Eigen::Index RemoteEmbedder::dimension() const {
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->dim >= 0) return impl_->dim;
  }
  return embed("dimension probe").size();
}

std::string RemoteEmbedder::identity() const {
  const BackendConfig& c = impl_->caller.config();
  return "remote-embed:" + c.endpoint + "#" + (c.embedding_model.empty() ? c.model : c.embedding_model);
}

Eigen::VectorXd embed_remote(const BackendConfig& cfg, std::string_view text) {
  if (text.empty()) throw BackendError("cannot embed empty text");
  BackendConfig c = cfg;
  c.kind = BackendKind::remote;
  c.validate();
  HttpCaller caller(c);
  return embedding_call(caller, text);
}

}  // namespace rlqg
