#include "derender/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include "derender/common.hpp"
#include "derender/parallel.hpp"
#include "derender/raster.hpp"

namespace derender::gen {

using nlohmann::json;

namespace {

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from_json(const json& j) {
    require(j.is_array() && j.size() == 3, Errc::data_error, "expected a 3-array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

bool identity(const Eigen::Matrix3d& r) { return (r - Eigen::Matrix3d::Identity()).norm() == 0.0; }

}  // namespace

json scene_to_json(const scene::SceneProgram& s) {
    json objects = json::array();
    for (const auto& o : s.objects) {
        json jo;
        jo["shape"] = o.shape;
        if (!o.size.empty()) jo["size"] = o.size;
        if (!o.color.empty()) jo["color"] = o.color;
        if (!o.material.empty()) jo["material"] = o.material;
        jo["loc"] = vec3_to_json(o.location);
        if (!identity(o.rotation)) {
            json rot = json::array();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) rot.push_back(o.rotation(r, c));
            jo["rot"] = rot;
        }
        objects.push_back(std::move(jo));
    }
    json cam;
    cam["position"] = vec3_to_json(s.camera.position);
    cam["look_at"] = vec3_to_json(s.camera.look_at);
    cam["pitch_deg"] = s.camera.pitch_deg;
    cam["radius"] = s.camera.radius;
    cam["azimuth_deg"] = s.camera.azimuth_deg;
    return json{{"camera", std::move(cam)}, {"objects", std::move(objects)}};
}

scene::SceneProgram scene_from_json(const json& j) {
    scene::SceneProgram s;
    require(j.is_object() && j.contains("objects"), Errc::data_error, "scene JSON missing objects");
    if (j.contains("camera")) {
        const json& cam = j["camera"];
        s.camera.position = vec3_from_json(cam.at("position"));
        s.camera.look_at = vec3_from_json(cam.at("look_at"));
        s.camera.pitch_deg = cam.value("pitch_deg", 0.0);
        s.camera.radius = cam.value("radius", 0.0);
        s.camera.azimuth_deg = cam.value("azimuth_deg", 0.0);
    }
    for (const json& jo : j["objects"]) {
        scene::ObjectRecord o;
        o.shape = jo.at("shape").get<std::string>();
        o.size = jo.value("size", std::string());
        o.color = jo.value("color", std::string());
        o.material = jo.value("material", std::string());
        o.location = vec3_from_json(jo.at("loc"));
        if (jo.contains("rot")) {
            const json& rot = jo["rot"];
            require(rot.is_array() && rot.size() == 9, Errc::data_error, "rot must be a 9-array");
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) o.rotation(r, c) = rot[static_cast<std::size_t>(r * 3 + c)].get<double>();
        }
        s.objects.push_back(std::move(o));
    }
    return s;
}

json record_to_json(const DatasetRecord& rec) {
    json j;
    j["index"] = rec.index;
    j["split"] = split_name(rec.split);
    j["program"] = rec.program.str();
    j["scene"] = scene_to_json(rec.scene);
    if (!rec.image_path.empty()) j["image"] = rec.image_path;
    return j;
}

DatasetRecord record_from_json(const json& j) {
    DatasetRecord rec;
    rec.index = j.at("index").get<long>();
    rec.split = split_from_name(j.value("split", "train"));
    rec.program = dsl::ProgramText::from_string(j.at("program").get<std::string>());
    rec.scene = scene_from_json(j.at("scene"));
    rec.image_path = j.value("image", std::string());
    return rec;
}

void write_dataset(std::vector<DatasetRecord>& records, const std::filesystem::path& dir,
                   const std::string& file_name, const WriteOptions& opts) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    if (opts.rasterize) {
        std::string stem = std::filesystem::path(file_name).stem().string();
        std::filesystem::path img_dir = dir / "images" / stem;
        std::filesystem::create_directories(img_dir, ec);
        for (auto& rec : records) {
            require(rec.scene.objects.size() == 1 && rec.scene.objects[0].shape == "dot", Errc::invalid_config,
                    "rasterization is only defined for single-dot scenes");
        }
        parallel_for(static_cast<long>(records.size()), opts.threads, [&](long i) {
            DatasetRecord& rec = records[static_cast<std::size_t>(i)];
            char name[32];
            std::snprintf(name, sizeof(name), "%06ld.png", rec.index);
            Eigen::Vector2d p(rec.scene.objects[0].location.x(), rec.scene.objects[0].location.y());
            raster::write_png(raster::rasterize_dot(p, opts.image_size, opts.dot_radius), img_dir / name);
            rec.image_path = (std::filesystem::path("images") / stem / name).generic_string();
        });
    }

    std::filesystem::path target = dir / file_name;
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        require(f.good(), Errc::io_error, "cannot open for writing: " + tmp.string());
        for (const auto& rec : records) {
            f << record_to_json(rec).dump() << '\n';
        }
        require(f.good(), Errc::io_error, "short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, target, ec);
    require(!ec, Errc::io_error, "cannot rename " + tmp.string() + " -> " + target.string());
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& file) {
    std::ifstream f(file, std::ios::binary);
    require(f.good(), Errc::io_error, "cannot open dataset: " + file.string());
    std::vector<DatasetRecord> out;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        require(!j.is_discarded(), Errc::data_error,
                file.string() + ":" + std::to_string(line_no) + ": invalid JSON");
        out.push_back(record_from_json(j));
    }
    return out;
}

}  // namespace derender::gen
