#include "immunize/wire.hpp"

#include <cstring>

#include "immunize/image_io.hpp"
#include "immunize/util.hpp"

namespace immunize {

nlohmann::json tensor_to_wire(const Tensor& tensor) {
    nlohmann::json payload;
    payload["shape"] = tensor.shape;
    payload["dtype"] = "f64";
    std::vector<std::uint8_t> bytes(tensor.data.size() * sizeof(double));
    std::memcpy(bytes.data(), tensor.data.data(), bytes.size());
    payload["data"] = base64_encode(bytes);
    return payload;
}

Tensor tensor_from_wire(const nlohmann::json& payload) {
    if (!payload.is_object() || !payload.contains("shape") || !payload.contains("data")) {
        throw IoError("wire tensor payload missing shape/data");
    }
    if (payload.value("dtype", "") != "f64") {
        throw IoError("wire tensor payload must carry dtype \"f64\"");
    }
    std::vector<int> shape = payload["shape"].get<std::vector<int>>();
    const auto bytes = base64_decode(payload["data"].get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(Tensor::element_count(shape)) * sizeof(double)) {
        throw IoError("wire tensor payload length does not match its shape");
    }
    std::vector<double> data(bytes.size() / sizeof(double));
    std::memcpy(data.data(), bytes.data(), bytes.size());
    return Tensor(std::move(shape), std::move(data));
}

nlohmann::json image_to_wire(const ImageBuffer& image) {
    return base64_encode(encode_png(image));
}

ImageBuffer image_from_wire(const nlohmann::json& payload) {
    if (!payload.is_string()) {
        throw IoError("wire image payload must be a base64 PNG string");
    }
    return decode_png(base64_decode(payload.get<std::string>()));
}

nlohmann::json prompt_to_wire(const EditPrompt& prompt) {
    nlohmann::json payload;
    payload["text"] = prompt.text;
    payload["guidance"] = prompt.guidance;
    return payload;
}

EditPrompt prompt_from_wire(const nlohmann::json& payload) {
    EditPrompt prompt;
    if (!payload.is_object() || !payload.contains("text") || !payload["text"].is_string()) {
        throw IoError("wire prompt payload missing text");
    }
    prompt.text = payload["text"].get<std::string>();
    if (payload.contains("guidance") && payload["guidance"].is_object()) {
        for (const auto& [key, value] : payload["guidance"].items()) {
            prompt.guidance[key] = value.get<double>();
        }
    }
    prompt.validate();
    return prompt;
}

}  // namespace immunize
