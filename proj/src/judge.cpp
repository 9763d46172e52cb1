#include "immunize/judge.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "immunize/util.hpp"

namespace immunize {

MockJudge::MockJudge(std::string id, std::string default_response, std::vector<Rule> rules)
    : id_(std::move(id)), default_response_(std::move(default_response)), rules_(std::move(rules)) {}

std::string MockJudge::query(const std::string& instruction, std::span<const ImageBytes>) {
    ++call_count_;
    for (const Rule& rule : rules_) {
        if (instruction.find(rule.needle) != std::string::npos) {
            return rule.response;
        }
    }
    return default_response_;
}

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint URL needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

struct HttpJudge::Impl {
    explicit Impl(const std::string& origin) : client(origin) {
        client.set_connection_timeout(10);
        client.set_read_timeout(60);
    }
    httplib::Client client;
};

HttpJudge::HttpJudge(HttpJudgeConfig config) : config_(std::move(config)) {
    if (config_.id.empty()) throw ConfigError("http judge needs an id");
    if (config_.endpoint.empty()) throw ConfigError("http judge needs an endpoint URL");
    const auto url = split_url(config_.endpoint);
    impl_ = std::make_unique<Impl>(url.origin);
}

HttpJudge::~HttpJudge() = default;

std::string HttpJudge::query(const std::string& instruction,
                             std::span<const ImageBytes> images) {
    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["instruction"] = instruction;
    nlohmann::json image_list = nlohmann::json::array();
    for (const ImageBytes& img : images) {
        image_list.push_back(base64_encode(img));
    }
    body["images"] = std::move(image_list);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto url = split_url(config_.endpoint);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        auto res = impl_->client.Post(url.path, headers, body.dump(), "application/json");
        if (res && res->status == 200) {
            nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
            if (!reply.is_discarded() && reply.contains("text") && reply["text"].is_string()) {
                return reply["text"].get<std::string>();
            }
            last_error = "malformed judge response body";
        } else if (res) {
            last_error = "judge endpoint returned status " + std::to_string(res->status);
        } else {
            last_error = "judge endpoint unreachable";
        }
        if (attempt < config_.max_attempts) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.backoff_base_ms * (1 << (attempt - 1))));
        }
    }
    throw JudgeError(config_.id + ": " + last_error, config_.max_attempts);
}

VerdictCache::VerdictCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "verdicts");
}

std::string VerdictCache::content_key(const std::string& judge_id, const std::string& instruction,
                                      std::span<const ImageBytes> images, int attempt) {
    std::vector<std::uint8_t> blob;
    auto append = [&blob](const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        blob.insert(blob.end(), p, p + n);
    };
    append(judge_id.data(), judge_id.size());
    blob.push_back(0);
    append(instruction.data(), instruction.size());
    blob.push_back(0);
    for (const ImageBytes& img : images) {
        append(img.data(), img.size());
        blob.push_back(0);
    }
    if (attempt > 0) {
        const std::string marker = "#retry" + std::to_string(attempt);
        append(marker.data(), marker.size());
    }
    return sha256_hex(blob);
}

std::optional<std::string> VerdictCache::lookup(const std::string& key) const {
    const auto path = root_ / "verdicts" / (key + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    nlohmann::json entry = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (entry.is_discarded() || !entry.contains("response") || !entry["response"].is_string()) {
        return std::nullopt;
    }
    return entry["response"].get<std::string>();
}

void VerdictCache::store(const std::string& key, const std::string& judge_id,
                         const std::string& raw_response) const {
    nlohmann::json entry;
    entry["judge"] = judge_id;
    entry["response"] = raw_response;
    atomic_write(root_ / "verdicts" / (key + ".json"), entry.dump(2) + "\n");
}

JudgeCallResult judge_call(JudgeClient& client, const std::string& instruction,
                           std::span<const ImageBytes> images, const VerdictCache* cache,
                           int attempt) {
    std::string key;
    if (cache) {
        key = VerdictCache::content_key(client.id(), instruction, images, attempt);
        if (auto hit = cache->lookup(key)) {
            return JudgeCallResult{*hit, true};
        }
    }
    std::string raw = client.query(instruction, images);
    if (cache) {
        cache->store(key, client.id(), raw);
    }
    return JudgeCallResult{std::move(raw), false};
}

}  // namespace immunize
