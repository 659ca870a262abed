#pragma once

#include "refield/geometry.hpp"
#include "refield/light_transport.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>

namespace refield {

using Json = nlohmann::json;

/// Parses a JSON file; DataError on I/O or syntax errors.
Json read_json(const std::filesystem::path& path);
/// Two-space indented, trailing newline; key order is sorted so output is stable.
void write_json(const std::filesystem::path& path, const Json& value);

/// Throws DataError naming the first key of `object` not in `allowed`.
void reject_unknown_keys(const Json& object, std::initializer_list<const char*> allowed, const std::string& context);

Json face_params_to_json(const FaceParams& params);
/// Quaternions are renormalized on load. With a model, coefficient counts are checked.
FaceParams face_params_from_json(const Json& j, const MorphableModel* model = nullptr);

Json camera_to_json(const Camera& camera);
Camera camera_from_json(const Json& j);

Json rig_to_json(const LightRig& rig);
LightRig rig_from_json(const Json& j);

/// Light weights stored next to the rig directions they refer to.
Json light_weights_to_json(const LightWeights& lambda, const LightRig& rig);
LightWeights light_weights_from_json(const Json& j, LightRig* rig = nullptr);

} // namespace refield
