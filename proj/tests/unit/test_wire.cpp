#include <doctest.h>

#include "helpers.hpp"
#include "immunize/backend_server.hpp"
#include "immunize/image_io.hpp"
#include "immunize/remote_backend.hpp"
#include "immunize/sifm.hpp"
#include "immunize/toy_backend.hpp"
#include "immunize/util.hpp"
#include "immunize/wire.hpp"

using namespace immunize;
using namespace immunize::testing;

namespace {

const EditPrompt kPrompt{"add a crown", {{"strength", 1.5}}};

}  // namespace

TEST_CASE("f64 array payloads survive the wire bit-exactly") {
    SplitMix64 rng(9);
    Tensor t = Tensor::zeros({2, 3, 5});
    for (double& v : t.data) v = rng.next_gaussian();
    const nlohmann::json payload = tensor_to_wire(t);
    CHECK(payload["dtype"] == "f64");
    const Tensor back = tensor_from_wire(payload);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
}

TEST_CASE("base64 codec round-trips") {
    for (std::size_t n : {0u, 1u, 2u, 3u, 17u, 100u}) {
        std::vector<std::uint8_t> bytes(n);
        SplitMix64 rng(n);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.next_u64() & 0xFF);
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK(base64_encode(std::vector<std::uint8_t>{'h', 'i'}) == "aGk=");
    CHECK_THROWS_AS(base64_decode("not base64!!"), IoError);
}

TEST_CASE("remote adapter matches direct toy backend calls over HTTP") {
    const ToyBackend local(ToyBackend::default_descriptor());
    BackendServer server(local);
    server.start();

    RemoteBackendConfig config;
    config.base_url = server.base_url();
    const RemoteBackend remote(config, ToyBackend::default_descriptor());

    // Images cross the wire as 8-bit PNG, so compare against the quantized
    // input on both paths.
    const ImageBuffer x = quantize_to_8bit(pattern_image(8, 12));

    SUBCASE("/features") {
        const FeatureTensor direct = local.aggregate_features(x, kPrompt, 5);
        const FeatureTensor viaWire = remote.aggregate_features(x, kPrompt, 5);
        CHECK(viaWire.timestep == 5);
        CHECK(viaWire.values.shape == direct.values.shape);
        CHECK(viaWire.values.data == direct.values.data);
    }

    SUBCASE("/grad") {
        const FeatureTensor phi_orig = local.aggregate_features(x, kPrompt, 5);
        const SifmLoss loss(phi_orig.values, 0.1, DistanceKind::MeanSquaredError);
        const TimestepLoss item{5, &loss};
        const Tensor direct = local.loss_gradient(x, kPrompt, std::span(&item, 1));
        const Tensor viaWire = remote.loss_gradient(x, kPrompt, std::span(&item, 1));
        CHECK(viaWire.shape == direct.shape);
        CHECK(viaWire.data == direct.data);
    }

    SUBCASE("/edit") {
        const ImageBuffer direct = local.edit(x, kPrompt, 3);
        const ImageBuffer viaWire = remote.edit(x, kPrompt, 3);
        CHECK(viaWire.data() == quantize_to_8bit(direct).data());
    }
}

TEST_CASE("an edit-only adapter reports a capability error for gradients") {
    const ToyBackend local(ToyBackend::default_descriptor());
    BackendServer server(local, /*enable_grad=*/false);
    server.start();

    RemoteBackendConfig config;
    config.base_url = server.base_url();
    const RemoteBackend remote(config, ToyBackend::default_descriptor());
    const ImageBuffer x = quantize_to_8bit(pattern_image(8, 8));

    const FeatureTensor phi = remote.aggregate_features(x, kPrompt, 2);  // still works
    const SifmLoss loss(phi.values, 0.1, DistanceKind::MeanSquaredError);
    const TimestepLoss item{2, &loss};
    CHECK_THROWS_AS(remote.loss_gradient(x, kPrompt, std::span(&item, 1)), CapabilityError);
}

TEST_CASE("transport failures surface as BackendError with retry metadata") {
    RemoteBackendConfig config;
    config.base_url = "http://127.0.0.1:1";  // nothing listens here
    config.max_attempts = 2;
    config.backoff_base_ms = 1;
    const RemoteBackend remote(config, ToyBackend::default_descriptor());
    const ImageBuffer x = quantize_to_8bit(pattern_image(8, 8));
    try {
        remote.edit(x, kPrompt, 0);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.attempts() == 2);
    }
}

TEST_CASE("remote latent access is a declared capability gap") {
    RemoteBackendConfig config;
    config.base_url = "http://127.0.0.1:1";
    const RemoteBackend remote(config, ToyBackend::default_descriptor());
    CHECK_THROWS_AS(remote.noisy_latent(quantize_to_8bit(pattern_image(8, 8)), 2, 0),
                    CapabilityError);
}
