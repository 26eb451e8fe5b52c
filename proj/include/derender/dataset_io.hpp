#pragma once

// JSONL dataset files: one record per line with index, split, program text,
// exact scene values, and an optional image path.  Writes are atomic
// (tmp file + rename) and byte-deterministic for identical inputs.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "derender/datagen.hpp"

namespace derender::gen {

nlohmann::json scene_to_json(const scene::SceneProgram& s);
scene::SceneProgram scene_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const DatasetRecord& rec);
DatasetRecord record_from_json(const nlohmann::json& j);

struct WriteOptions {
    bool rasterize = false;  // write a PNG per record (dot scenes only)
    int image_size = 64;
    double dot_radius = 4.0;
    int threads = 1;  // rasterization workers; output is thread-count independent
};

// Writes dir/<file_name> (and images under dir/images/<stem>/ when
// rasterizing; image paths are recorded relative to dir).
void write_dataset(std::vector<DatasetRecord>& records, const std::filesystem::path& dir,
                   const std::string& file_name, const WriteOptions& opts = {});

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& file);

}  // namespace derender::gen
