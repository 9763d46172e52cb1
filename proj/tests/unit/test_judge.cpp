#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include <json.hpp>

#include "helpers.hpp"
#include "immunize/judge.hpp"

using namespace immunize;
using namespace immunize::testing;

namespace {

constexpr const char* kSuccessResponse =
    R"({"semantic_mismatch": true, "quality_degradation": false, "rationale": "mock"})";

std::vector<ImageBytes> two_images() {
    return {ImageBytes{1, 2, 3}, ImageBytes{4, 5, 6}};
}

// Minimal judge endpoint fixture. behaviour: number of failures to serve
// before answering 200.
class JudgeServerFixture {
public:
    explicit JudgeServerFixture(int failures_before_success)
        : failures_(failures_before_success) {
        server_.Post("/v1/judge", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            last_body_ = req.body;
            if (auto it = req.headers.find("Authorization"); it != req.headers.end()) {
                last_auth_ = it->second;
            }
            if (failures_ > 0) {
                --failures_;
                res.status = 503;
                return;
            }
            nlohmann::json reply;
            reply["text"] = kSuccessResponse;
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~JudgeServerFixture() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/judge";
    }
    int hits() const { return hits_; }
    std::string last_body() const { return last_body_; }
    std::string last_auth() const { return last_auth_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> failures_;
    std::atomic<int> hits_{0};
    std::string last_body_;
    std::string last_auth_;
};

}  // namespace

TEST_CASE("mock judge answers from its rule table deterministically") {
    MockJudge judge("mock-a", "default",
                    {{"witch", "witch-response"}, {"watercolor", "water-response"}});
    const auto images = two_images();
    CHECK(judge.query("please make her a witch now", images) == "witch-response");
    CHECK(judge.query("convert to watercolor", images) == "water-response");
    CHECK(judge.query("unrelated", images) == "default");
    CHECK(judge.query("please make her a witch now", images) == "witch-response");
    CHECK(judge.call_count() == 4);
}

TEST_CASE("http judge posts the wire body and honors the credential env var") {
    JudgeServerFixture server(0);
    setenv("IMMUNIZE_JUDGE_API_KEY", "secret-token", 1);
    HttpJudgeConfig config;
    config.id = "judge-1";
    config.endpoint = server.endpoint();
    config.model = "prober";
    HttpJudge judge(config);
    const std::string raw = judge.query("instruction text", two_images());
    CHECK(raw == kSuccessResponse);
    CHECK(server.hits() == 1);
    CHECK(server.last_auth() == "Bearer secret-token");
    const nlohmann::json body = nlohmann::json::parse(server.last_body());
    CHECK(body["model"] == "prober");
    CHECK(body["instruction"] == "instruction text");
    CHECK(body["images"].size() == 2);
    unsetenv("IMMUNIZE_JUDGE_API_KEY");
}

TEST_CASE("http judge retries with backoff, then succeeds") {
    JudgeServerFixture server(2);
    HttpJudgeConfig config;
    config.id = "judge-1";
    config.endpoint = server.endpoint();
    config.model = "prober";
    config.max_attempts = 3;
    config.backoff_base_ms = 1;
    HttpJudge judge(config);
    CHECK(judge.query("hello", two_images()) == kSuccessResponse);
    CHECK(server.hits() == 3);
}

TEST_CASE("http judge surfaces exhausted retries as JudgeError with attempts") {
    JudgeServerFixture server(100);
    HttpJudgeConfig config;
    config.id = "judge-1";
    config.endpoint = server.endpoint();
    config.model = "prober";
    config.max_attempts = 2;
    config.backoff_base_ms = 1;
    HttpJudge judge(config);
    try {
        judge.query("hello", two_images());
        FAIL("expected JudgeError");
    } catch (const JudgeError& e) {
        CHECK(e.attempts() == 2);
    }
    CHECK(server.hits() == 2);
}

TEST_CASE("judge_call caches by content and never re-queries on a hit") {
    TempDir dir("cache");
    VerdictCache cache(dir.path());
    MockJudge judge("mock-a", kSuccessResponse);
    const auto images = two_images();

    const JudgeCallResult first = judge_call(judge, "instruction", images, &cache);
    CHECK_FALSE(first.from_cache);
    CHECK(judge.call_count() == 1);

    const JudgeCallResult second = judge_call(judge, "instruction", images, &cache);
    CHECK(second.from_cache);
    CHECK(second.raw_response == first.raw_response);
    CHECK(judge.call_count() == 1);  // no new network call

    SUBCASE("cache files live under verdicts/<sha256>.json") {
        const std::string key = VerdictCache::content_key("mock-a", "instruction", images);
        CHECK(key.size() == 64);
        CHECK(std::filesystem::exists(dir.path() / "verdicts" / (key + ".json")));
    }
}

TEST_CASE("two judges on one sample produce two cache entries") {
    TempDir dir("cache");
    VerdictCache cache(dir.path());
    MockJudge a("mock-a", kSuccessResponse);
    MockJudge b("mock-b", kSuccessResponse);
    const auto images = two_images();
    judge_call(a, "instruction", images, &cache);
    judge_call(b, "instruction", images, &cache);
    int entries = 0;
    for (const auto& item : std::filesystem::directory_iterator(dir.path() / "verdicts")) {
        entries += item.is_regular_file();
    }
    CHECK(entries == 2);
}

TEST_CASE("retry attempts key separately so re-queries are possible") {
    const auto images = two_images();
    const std::string base = VerdictCache::content_key("j", "text", images, 0);
    const std::string retry = VerdictCache::content_key("j", "text", images, 1);
    CHECK(base != retry);
}

TEST_CASE("concurrent cache writers do not corrupt entries") {
    TempDir dir("cache");
    VerdictCache cache(dir.path());
    std::vector<std::thread> writers;
    for (int i = 0; i < 8; ++i) {
        writers.emplace_back([&cache, i] {
            for (int k = 0; k < 20; ++k) {
                cache.store("shared-key", "judge", "payload-" + std::to_string(i));
            }
        });
    }
    for (auto& t : writers) t.join();
    const auto value = cache.lookup("shared-key");
    REQUIRE(value.has_value());
    CHECK(value->rfind("payload-", 0) == 0);
}
