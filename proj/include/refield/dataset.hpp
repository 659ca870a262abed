#pragma once

#include "refield/geometry.hpp"
#include "refield/json_io.hpp"
#include "refield/light_transport.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace refield {

inline constexpr int kManifestSchemaVersion = 1;

/// Parameters of a synthetic light-stage capture. "Cameras" are head poses
/// in front of one fixed pinhole camera; the rig lives in that camera frame.
struct DatasetConfig {
    int identities = 4;
    int cameras = 2;
    int lights = 30;
    int image_size = 128;
    int albedo_size = 128;
    double camera_yaw_span_deg = 40.0; ///< poses spread evenly over [-span/2, span/2]
    int procedural_envs = 1;
    int env_width = 64;
    int env_height = 32;
    std::vector<std::filesystem::path> env_files; ///< .hdr or .pfm, used in addition to procedural maps
    double light_intensity = 1.0;
    double specular_strength = 0.25;
    double shininess = 24.0;
    double ambient = 0.02;
    bool shadows = true;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Writes <root>/model.rfmm, rig.json, envs/, manifest.json and per identity
/// and camera: olat_<k>.pfm, params.json, landmarks.json, relit_<env>.pfm.
/// Each identity also gets albedo.pfm (the ground-truth diffuse texture).
/// Returns the manifest.
Json synthesize_dataset(const MorphableModel& model, const DatasetConfig& config, const std::filesystem::path& root);

struct DatasetView {
    std::string camera;
    Camera intrinsics;
    FaceParams params;
    std::filesystem::path landmarks;
    std::vector<std::filesystem::path> olats;
    std::vector<std::string> env_ids;
    std::vector<std::filesystem::path> relit;
};

struct DatasetIdentity {
    std::string id;
    std::filesystem::path albedo;
    std::vector<DatasetView> views;
};

struct Dataset {
    std::filesystem::path root;
    Json manifest;
    LightRig rig;
    double specular_strength = 0.0;
    double shininess = 1.0;
    double ambient = 0.0;
    std::vector<DatasetIdentity> identities;
};

/// Reads and checks a manifest; DataError names the first missing file.
Dataset load_dataset(const std::filesystem::path& root);

Eigen::Matrix2Xd load_landmarks(const std::filesystem::path& path);

} // namespace refield
