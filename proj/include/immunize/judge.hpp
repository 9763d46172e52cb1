#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "immunize/errors.hpp"

namespace immunize {

using ImageBytes = std::vector<std::uint8_t>;

/// Pluggable multimodal judge. query() returns the provider's raw text and
/// throws JudgeError after the transport retry budget is exhausted.
class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual const std::string& id() const = 0;
    virtual const std::string& model() const = 0;
    virtual double temperature() const = 0;
    virtual std::string query(const std::string& instruction,
                              std::span<const ImageBytes> images) = 0;
};

/// Scripted judge for tests and offline runs. The first rule whose needle
/// occurs in the instruction wins; otherwise the default response is
/// returned. Fully deterministic.
class MockJudge : public JudgeClient {
public:
    struct Rule {
        std::string needle;
        std::string response;
    };

    MockJudge(std::string id, std::string default_response, std::vector<Rule> rules = {});

    const std::string& id() const override { return id_; }
    const std::string& model() const override { return model_; }
    double temperature() const override { return 0.0; }
    std::string query(const std::string& instruction,
                      std::span<const ImageBytes> images) override;

    int call_count() const { return call_count_; }

private:
    std::string id_;
    std::string model_ = "mock";
    std::string default_response_;
    std::vector<Rule> rules_;
    int call_count_ = 0;
};

/// HTTP judge configuration. The credential is read from the environment
/// variable named by api_key_env (default IMMUNIZE_JUDGE_API_KEY) and sent
/// as a bearer token.
struct HttpJudgeConfig {
    std::string id;
    std::string endpoint;  // full URL, e.g. http://host:port/v1/judge
    std::string model;
    double temperature = 0.0;
    int max_attempts = 3;
    int backoff_base_ms = 200;
    std::string api_key_env = "IMMUNIZE_JUDGE_API_KEY";
};

/// JSON-over-HTTP judge client. Request body:
///   {"model": ..., "temperature": ..., "instruction": ...,
///    "images": [<base64 PNG>, ...]}
/// Expected response: {"text": <raw judge answer>}. Transport and non-200
/// failures are retried with exponential backoff before JudgeError.
class HttpJudge : public JudgeClient {
public:
    explicit HttpJudge(HttpJudgeConfig config);
    ~HttpJudge() override;

    const std::string& id() const override { return config_.id; }
    const std::string& model() const override { return config_.model; }
    double temperature() const override { return config_.temperature; }
    std::string query(const std::string& instruction,
                      std::span<const ImageBytes> images) override;

private:
    HttpJudgeConfig config_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Content-addressed raw-response cache under <root>/verdicts/<sha256>.json.
/// The key hashes (judge id, instruction, image bytes); retries append a
/// retry marker so a fresh response can be fetched without clobbering the
/// original. Writers use write-to-temp + atomic rename.
class VerdictCache {
public:
    explicit VerdictCache(std::filesystem::path root);

    static std::string content_key(const std::string& judge_id, const std::string& instruction,
                                   std::span<const ImageBytes> images, int attempt = 0);

    std::optional<std::string> lookup(const std::string& key) const;
    void store(const std::string& key, const std::string& judge_id,
               const std::string& raw_response) const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

struct JudgeCallResult {
    std::string raw_response;
    bool from_cache = false;
};

/// Cached judge invocation: returns the cached raw response when present,
/// otherwise queries the client and stores the result. Pass a null cache to
/// force a live call.
JudgeCallResult judge_call(JudgeClient& client, const std::string& instruction,
                           std::span<const ImageBytes> images, const VerdictCache* cache,
                           int attempt = 0);

}  // namespace immunize
