#include "immunize/backend_server.hpp"

#include <httplib.h>
#include <json.hpp>

#include "immunize/sifm.hpp"
#include "immunize/wire.hpp"

namespace immunize {

struct BackendServer::Impl {
    httplib::Server server;
};

namespace {

SifmLoss loss_from_spec(const nlohmann::json& spec) {
    if (!spec.is_object() || spec.value("kind", "") != "sifm") {
        throw IoError("unsupported wire loss spec");
    }
    Tensor reference = tensor_from_wire(spec.at("reference"));
    const double lambda = spec.value("lambda", 0.0);
    const DistanceKind kind = spec.value("distance", "mse") == std::string("sse")
                                  ? DistanceKind::SumSquaredError
                                  : DistanceKind::MeanSquaredError;
    return SifmLoss(std::move(reference), lambda, kind, spec.value("use_norm", true),
                    spec.value("use_dist", true));
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    nlohmann::json body;
    body["error"] = message;
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

BackendServer::BackendServer(const EditingBackend& backend, bool enable_grad)
    : backend_(backend), enable_grad_(enable_grad), impl_(std::make_unique<Impl>()) {
    impl_->server.Post("/features", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const nlohmann::json body = nlohmann::json::parse(req.body);
            const ImageBuffer image = image_from_wire(body.at("image"));
            const EditPrompt prompt = prompt_from_wire(body.at("prompt"));
            nlohmann::json features = nlohmann::json::array();
            for (int t : body.at("timesteps").get<std::vector<int>>()) {
                const FeatureTensor phi = backend_.aggregate_features(image, prompt, t);
                nlohmann::json entry = tensor_to_wire(phi.values);
                entry["timestep"] = phi.timestep;
                features.push_back(std::move(entry));
            }
            nlohmann::json reply;
            reply["features"] = std::move(features);
            res.set_content(reply.dump(), "application/json");
        } catch (const std::exception& e) {
            reply_error(res, 400, e.what());
        }
    });

    impl_->server.Post("/grad", [this](const httplib::Request& req, httplib::Response& res) {
        if (!enable_grad_) {
            reply_error(res, 501, "this adapter is edit-only");
            return;
        }
        try {
            const nlohmann::json body = nlohmann::json::parse(req.body);
            const ImageBuffer image = image_from_wire(body.at("image"));
            const EditPrompt prompt = prompt_from_wire(body.at("prompt"));
            std::vector<SifmLoss> losses;
            std::vector<TimestepLoss> items;
            const auto& list = body.at("losses");
            losses.reserve(list.size());
            for (const auto& entry : list) {
                losses.push_back(loss_from_spec(entry.at("spec")));
            }
            items.reserve(losses.size());
            for (std::size_t i = 0; i < losses.size(); ++i) {
                items.push_back(TimestepLoss{list[i].at("timestep").get<int>(), &losses[i]});
            }
            const Tensor gradient = backend_.loss_gradient(image, prompt, items);
            nlohmann::json reply;
            reply["gradient"] = tensor_to_wire(gradient);
            res.set_content(reply.dump(), "application/json");
        } catch (const std::exception& e) {
            reply_error(res, 400, e.what());
        }
    });

    impl_->server.Post("/edit", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const nlohmann::json body = nlohmann::json::parse(req.body);
            const ImageBuffer image = image_from_wire(body.at("image"));
            const EditPrompt prompt = prompt_from_wire(body.at("prompt"));
            const auto seed = body.at("seed").get<std::uint64_t>();
            const ImageBuffer edited = backend_.edit(image, prompt, seed);
            nlohmann::json reply;
            reply["image"] = image_to_wire(edited);
            res.set_content(reply.dump(), "application/json");
        } catch (const std::exception& e) {
            reply_error(res, 400, e.what());
        }
    });
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::start() {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error("backend server could not bind a port");
    serve_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void BackendServer::stop() {
    if (serve_thread_.joinable()) {
        impl_->server.stop();
        serve_thread_.join();
    }
}

std::string BackendServer::base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
}

}  // namespace immunize
