#pragma once

#include <string>

#include <json.hpp>

#include "immunize/backend.hpp"
#include "immunize/image.hpp"

namespace immunize {

// JSON payload helpers for the adapter wire protocol. Arrays travel as
// {"shape": [...], "dtype": "f64", "data": <base64 little-endian bytes>};
// images travel as base64 PNG (so pixel data is quantized to 8 bits at the
// boundary, matching what real out-of-process editors consume).

nlohmann::json tensor_to_wire(const Tensor& tensor);
Tensor tensor_from_wire(const nlohmann::json& payload);

nlohmann::json image_to_wire(const ImageBuffer& image);
ImageBuffer image_from_wire(const nlohmann::json& payload);

nlohmann::json prompt_to_wire(const EditPrompt& prompt);
EditPrompt prompt_from_wire(const nlohmann::json& payload);

}  // namespace immunize
