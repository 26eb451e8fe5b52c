#include "derender/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "derender/common.hpp"
#include "derender/dataset_io.hpp"
#include "derender/parallel.hpp"
#include "derender/raster.hpp"

namespace derender::pipe {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::duration<double>>(Clock::now() - t0).count();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), Errc::io_error, "cannot open " + tmp.string() + " for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        require(out.good(), Errc::io_error, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, Errc::io_error, "cannot move " + tmp.string() + " into place");
}

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::filesystem::path default_data_dir() {
    const char* env = std::getenv("DERENDER_DATA_DIR");
    if (env != nullptr && *env != '\0') return std::filesystem::path(env);
    return std::filesystem::path("data");
}

scene::AttributeCatalog task_catalog(const std::string& task) {
    if (task == "cogent") return scene::clevr_catalog();
    if (task == "dot2d") return scene::dot_catalog();
    if (task == "so3") return scene::so3_catalog();
    if (task == "scene6dof") return scene::extended_catalog();
    fail(Errc::invalid_config, "unknown task '" + task + "'");
}

PartialMarker::PartialMarker(const std::filesystem::path& dir) : marker_(dir / ".partial") {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(marker_, std::ios::trunc);
    require(out.good(), Errc::io_error, "cannot create " + marker_.string());
}

void PartialMarker::complete() {
    std::error_code ec;
    std::filesystem::remove(marker_, ec);
    completed_ = true;
}

void write_manifest(const std::filesystem::path& dir, const ManifestInfo& info) {
    nlohmann::json j{{"command", info.command}, {"config", info.config},        {"seed", info.seed},
                     {"inputs", info.inputs},   {"outputs", info.outputs},      {"tool_version", "0.1.0"},
                     {"duration_seconds", info.duration_seconds}};
    write_text_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

// gen --------------------------------------------------------------------------

nlohmann::json GenSpec::to_json() const {
    return nlohmann::json{{"task", task},
                          {"n", n},
                          {"n_val", n_val},
                          {"seed", seed},
                          {"split", split},
                          {"condition", std::string(1, condition)},
                          {"dist", dist},
                          {"region", region},
                          {"scene6dof_split", scene6dof_split}};
}

GenResult run_gen(const GenSpec& spec, const std::filesystem::path& out_dir) {
    auto t0 = Clock::now();
    require(spec.n > 0, Errc::invalid_config, "--n must be positive");
    PartialMarker marker(out_dir);
    GenResult result;
    ManifestInfo info;
    info.command = "gen";
    info.config = spec.to_json();
    info.seed = spec.seed;

    auto write_split = [&](std::vector<gen::DatasetRecord>& records, const std::string& file, bool rasterize) {
        gen::WriteOptions w;
        w.rasterize = rasterize;
        w.threads = spec.threads;
        gen::write_dataset(records, out_dir, file, w);
        result.files.push_back(out_dir / file);
        info.outputs.push_back((out_dir / file).string());
    };

    if (spec.task == "cogent") {
        gen::Split split = gen::split_from_name(spec.split);
        auto records = gen::gen_cogent(static_cast<int>(spec.n), gen::CoGenTCondition::from_id(spec.condition),
                                       spec.seed, {}, split);
        write_split(records, spec.split + ".jsonl", false);
    } else if (spec.task == "dot2d") {
        gen::CheckerboardLayout layout;
        if (spec.dist == "checkerboard") {
            auto records = gen::gen_dot2d(static_cast<int>(spec.n), gen::DotDistribution::checkerboard, layout,
                                          spec.seed);
            write_split(records, "train.jsonl", true);
            if (spec.n_val > 0) {
                // Uniform evaluation stream, first n_val records of each cell
                // class; the stream is prefix-stable in its seed so the margin
                // retries cannot change earlier records.
                std::uint64_t val_seed = derive_seed(spec.seed, 0xE7A1);
                long want = spec.n_val;
                long draw = 2 * want + 8 * static_cast<long>(std::sqrt(static_cast<double>(want))) + 64;
                std::vector<gen::DatasetRecord> id_recs, ood_recs;
                for (int attempt = 0; attempt < 8; ++attempt) {
                    auto uniform = gen::gen_dot2d(static_cast<int>(draw), gen::DotDistribution::uniform, layout,
                                                  val_seed);
                    id_recs.clear();
                    ood_recs.clear();
                    for (auto& rec : uniform) {
                        auto& bucket = rec.split == gen::Split::val_id ? id_recs : ood_recs;
                        if (static_cast<long>(bucket.size()) < want) bucket.push_back(std::move(rec));
                    }
                    if (static_cast<long>(id_recs.size()) == want && static_cast<long>(ood_recs.size()) == want)
                        break;
                    draw *= 2;
                }
                require(static_cast<long>(id_recs.size()) == want && static_cast<long>(ood_recs.size()) == want,
                        Errc::data_error, "could not draw enough evaluation records");
                write_split(id_recs, "val_id.jsonl", true);
                write_split(ood_recs, "val_ood.jsonl", true);
            }
        } else if (spec.dist == "uniform") {
            auto records = gen::gen_dot2d(static_cast<int>(spec.n), gen::DotDistribution::uniform, layout, spec.seed);
            std::vector<gen::DatasetRecord> id_recs, ood_recs;
            for (auto& rec : records)
                (rec.split == gen::Split::val_id ? id_recs : ood_recs).push_back(std::move(rec));
            write_split(id_recs, "val_id.jsonl", true);
            write_split(ood_recs, "val_ood.jsonl", true);
        } else {
            fail(Errc::invalid_config, "unknown dot2d distribution '" + spec.dist + "'");
        }
    } else if (spec.task == "so3") {
        gen::So3Region region;
        gen::Split split;
        if (spec.region == "id") {
            region = gen::So3Region::in_distribution;
            split = spec.split == "train" ? gen::Split::train : gen::split_from_name(spec.split);
        } else if (spec.region == "gaps") {
            region = gen::So3Region::gaps;
            split = gen::split_from_name(spec.split == "train" ? "val_ood" : spec.split);
        } else {
            fail(Errc::invalid_config, "unknown so3 region '" + spec.region + "'");
        }
        auto records = gen::gen_so3(static_cast<int>(spec.n), region, gen::AngleGapSpec::defaults(), spec.seed);
        for (auto& rec : records) rec.split = split;
        write_split(records, std::string(gen::split_name(split)) + ".jsonl", false);
    } else if (spec.task == "scene6dof") {
        gen::Scene6DofSplit split;
        if (spec.scene6dof_split == "train") split = gen::Scene6DofSplit::train;
        else if (spec.scene6dof_split == "ood_texture") split = gen::Scene6DofSplit::ood_texture;
        else if (spec.scene6dof_split == "ood_shape") split = gen::Scene6DofSplit::ood_shape;
        else fail(Errc::invalid_config, "unknown scene6dof split '" + spec.scene6dof_split + "'");
        auto records = gen::gen_scene6dof(static_cast<int>(spec.n), split, spec.seed);
        std::string file = records.empty() ? "train.jsonl" : std::string(gen::split_name(records[0].split)) + ".jsonl";
        write_split(records, file, false);
    } else {
        fail(Errc::invalid_config, "unknown task '" + spec.task + "'");
    }

    info.duration_seconds = seconds_since(t0);
    write_manifest(out_dir, info);
    marker.complete();
    return result;
}

// train ------------------------------------------------------------------------

nlohmann::json TrainSpec::to_json() const {
    return nlohmann::json{{"mode", mode},
                          {"task", task},
                          {"data_dir", data_dir.string()},
                          {"model", model.to_json()},
                          {"train",
                           {{"steps", train.steps},
                            {"batch_size", train.batch_size},
                            {"lr_max", train.lr_max},
                            {"lr_min", train.lr_min},
                            {"warmup", train.warmup},
                            {"w_ce", train.w_ce},
                            {"w_mse", train.w_mse},
                            {"val_every", train.val_every},
                            {"val_max", train.val_max},
                            {"seed", train.seed}}}};
}

TrainSpec dot2d_train_defaults(const std::filesystem::path& data_dir, const std::string& mode, std::uint64_t seed) {
    TrainSpec spec;
    spec.mode = mode;
    spec.task = "dot2d";
    spec.data_dir = data_dir;
    spec.model.context = 24;
    spec.model.embed = 128;
    spec.model.layers = 2;
    spec.model.heads = 4;
    spec.model.mlp_hidden = 512;
    spec.model.numeric_hidden = 64;
    spec.model.image_pixels = 64 * 64;
    spec.model.encoder_hidden = 256;
    spec.model.slot_families = 2;  // x then y
    spec.train.steps = 3000;
    spec.train.batch_size = 32;
    spec.train.lr_max = 1e-3;
    spec.train.lr_min = 1e-5;
    spec.train.warmup = 150;
    spec.train.val_every = 250;
    spec.train.val_max = 256;
    spec.train.seed = seed;
    return spec;
}

net::TrainData load_dot2d_data(const std::filesystem::path& data_dir, const std::string& mode,
                               const std::string& train_file, const std::string& val_file) {
    net::TrainData data;
    data.mode = tok::mode_from_name(mode);
    data.vocab = tok::build_vocabulary(scene::dot_catalog(), data.mode);

    auto load_split = [&](const std::string& file, std::vector<net::TrainSample>& out) {
        auto records = gen::read_dataset(data_dir / file);
        out.reserve(records.size());
        for (const gen::DatasetRecord& rec : records) {
            require(!rec.image_path.empty(), Errc::data_error,
                    "record " + std::to_string(rec.index) + " has no image; generate with rasterization");
            require(rec.scene.objects.size() == 1 && rec.scene.objects[0].shape == "dot", Errc::data_error,
                    "training is defined for single-dot scenes");
            net::TrainSample s;
            s.image = raster::to_deficit(raster::read_png(data_dir / rec.image_path));
            tok::TokenStream stream = tok::encode(rec.program, data.vocab, data.mode);
            s.ids = std::move(stream.ids);
            s.gt_values = {rec.scene.objects[0].location.x(), rec.scene.objects[0].location.y()};
            if (data.mode == tok::Mode::float_slots) {
                require(stream.slots.size() == s.gt_values.size(), Errc::slot_mismatch,
                        "record " + std::to_string(rec.index) + " has " + std::to_string(stream.slots.size()) +
                            " slots, expected " + std::to_string(s.gt_values.size()));
                s.slots = std::move(stream.slots);
                for (std::size_t k = 0; k < s.slots.size(); ++k) s.slots[k].second = s.gt_values[k];
            }
            out.push_back(std::move(s));
        }
    };

    load_split(train_file, data.train);
    std::string val = val_file;
    if (val.empty()) {
        if (std::filesystem::exists(data_dir / "val_ood.jsonl")) val = "val_ood.jsonl";
        else if (std::filesystem::exists(data_dir / "val_id.jsonl")) val = "val_id.jsonl";
    }
    if (!val.empty() && std::filesystem::exists(data_dir / val)) load_split(val, data.val);
    return data;
}

TrainOutcome run_train(const TrainSpec& spec, const std::filesystem::path& out_dir) {
    auto t0 = Clock::now();
    require(spec.task == "dot2d", Errc::invalid_config, "training is defined for the dot2d task");
    require(spec.mode == "float" || spec.mode == "char", Errc::invalid_config,
            "mode must be 'float' or 'char', got '" + spec.mode + "'");
    PartialMarker marker(out_dir);

    net::TrainData data = load_dot2d_data(spec.data_dir, spec.mode);
    net::TrainResult result = net::train_model(spec.model, spec.train, data);

    TrainOutcome outcome;
    outcome.checkpoint = out_dir / "checkpoint.bin";
    outcome.trace_csv = out_dir / "metrics.csv";

    nlohmann::json meta{{"task", spec.task}, {"mode", spec.mode}, {"seed", spec.train.seed},
                        {"data_dir", spec.data_dir.string()}};
    net::save_checkpoint(outcome.checkpoint, result.model, data.vocab, meta);

    std::string csv = "step,lr,loss_total,loss_ce,loss_mse,val_mse\n";
    for (const net::TrainTraceRow& row : result.trace) {
        csv += std::to_string(row.step);
        csv += ',' + fmt_g(row.lr) + ',' + fmt_g(row.total) + ',' + fmt_g(row.ce) + ',' + fmt_g(row.mse) + ',';
        if (row.has_val) csv += fmt_g(row.val_metric);
        csv += '\n';
    }
    write_text_atomic(outcome.trace_csv, csv);

    ManifestInfo info;
    info.command = "train";
    info.config = spec.to_json();
    info.seed = spec.train.seed;
    info.inputs = {spec.data_dir.string()};
    info.outputs = {outcome.checkpoint.string(), outcome.trace_csv.string()};
    info.duration_seconds = seconds_since(t0);
    write_manifest(out_dir, info);
    marker.complete();

    outcome.result = std::move(result);
    return outcome;
}

// eval -------------------------------------------------------------------------

std::vector<std::optional<dsl::ProgramText>> decode_dataset(const net::Checkpoint& ck,
                                                            const std::vector<gen::DatasetRecord>& records,
                                                            const std::filesystem::path& data_dir, int threads) {
    std::vector<std::optional<dsl::ProgramText>> out(records.size());
    if (records.empty()) return out;

    const long chunk = 512;
    const long chunks = (static_cast<long>(records.size()) + chunk - 1) / chunk;
    parallel_for(chunks, threads, [&](long c) {
        std::size_t lo = static_cast<std::size_t>(c * chunk);
        std::size_t hi = std::min(records.size(), lo + static_cast<std::size_t>(chunk));
        std::vector<std::vector<float>> images(hi - lo);
        std::vector<const float*> ptrs(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            const gen::DatasetRecord& rec = records[i];
            require(!rec.image_path.empty(), Errc::data_error,
                    "record " + std::to_string(rec.index) + " has no image; decode needs a rasterised dataset");
            images[i - lo] = raster::to_deficit(raster::read_png(data_dir / rec.image_path));
            ptrs[i - lo] = images[i - lo].data();
        }
        std::vector<std::vector<int>> ids = net::greedy_decode(ck.model, ptrs, ck.vocab, 0);
        std::vector<std::vector<double>> numbers;
        if (ck.model.cfg.mode == tok::Mode::float_slots)
            numbers = net::numeric_readout(ck.model, ptrs, ids, ck.vocab);
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                std::vector<double> vals =
                    ck.model.cfg.mode == tok::Mode::float_slots ? numbers[i - lo] : std::vector<double>{};
                out[i] = tok::decode_two_pass(ids[i - lo], vals, ck.vocab);
            } catch (const Error&) {
                out[i] = std::nullopt;  // counted as a malformed generation
            }
        }
    });
    return out;
}

nlohmann::json EvalSpec::to_json() const {
    return nlohmann::json{{"task", task},
                          {"gt_file", gt_file.string()},
                          {"pred_checkpoint", pred_checkpoint.string()},
                          {"pred_file", pred_file.string()},
                          {"three_value_repr", dsl::rotation_repr_name(three_value_repr)},
                          {"with_chamfer", with_chamfer},
                          {"chamfer_points", chamfer_points},
                          {"chamfer_seed", chamfer_seed}};
}

EvalOutcome run_eval(const EvalSpec& spec, const std::filesystem::path& out_dir) {
    auto t0 = Clock::now();
    require(spec.pred_checkpoint.empty() != spec.pred_file.empty(), Errc::invalid_config,
            "give exactly one prediction source (checkpoint or program file)");
    scene::AttributeCatalog catalog = task_catalog(spec.task);
    scene::AttributeIndex index(catalog);
    dsl::ParseOptions popts;
    popts.three_value_repr = spec.three_value_repr;
    PartialMarker marker(out_dir);

    std::vector<gen::DatasetRecord> gt_records = gen::read_dataset(spec.gt_file);
    require(!gt_records.empty(), Errc::data_error, "ground-truth file has no records");
    std::vector<scene::SceneProgram> gts;
    gts.reserve(gt_records.size());
    for (const gen::DatasetRecord& rec : gt_records) gts.push_back(dsl::parse_program(rec.program, index, popts));

    EvalOutcome outcome;
    if (!spec.pred_checkpoint.empty()) {
        net::Checkpoint ck = net::load_checkpoint(spec.pred_checkpoint);
        outcome.predictions = decode_dataset(ck, gt_records, spec.gt_file.parent_path(), spec.threads);
    } else {
        std::ifstream in(spec.pred_file, std::ios::binary);
        require(in.good(), Errc::io_error, "cannot open " + spec.pred_file.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            require(!j.is_discarded() && j.contains("program"), Errc::data_error,
                    "prediction line " + std::to_string(outcome.predictions.size() + 1) +
                        " is not a {\"program\": ...} object");
            if (j["program"].is_null()) outcome.predictions.emplace_back(std::nullopt);
            else outcome.predictions.emplace_back(dsl::ProgramText::from_string(j["program"].get<std::string>()));
        }
        require(outcome.predictions.size() == gt_records.size(), Errc::data_error,
                "prediction count " + std::to_string(outcome.predictions.size()) + " != ground-truth count " +
                    std::to_string(gt_records.size()));
    }

    std::vector<std::optional<scene::SceneProgram>> pred_scenes(outcome.predictions.size());
    for (std::size_t i = 0; i < outcome.predictions.size(); ++i) {
        if (!outcome.predictions[i].has_value()) continue;
        try {
            pred_scenes[i] = dsl::parse_program(*outcome.predictions[i], index, popts);
        } catch (const Error&) {
            pred_scenes[i] = std::nullopt;
        }
    }

    eval::EvaluateOptions eopts;
    eopts.with_chamfer = spec.with_chamfer;
    eopts.chamfer_points = spec.chamfer_points;
    eopts.chamfer_seed = spec.chamfer_seed;
    outcome.result = eval::evaluate_scenes(pred_scenes, gts, catalog, eopts);

    // report.csv / report.json
    write_text_atomic(out_dir / "report.csv", eval::MetricReport::csv_header() + "\n" + outcome.result.report.csv_row() + "\n");
    const eval::MetricReport& r = outcome.result.report;
    long malformed = 0;
    for (const auto& row : outcome.result.rows) malformed += row.malformed ? 1 : 0;
    nlohmann::json jr{{"n", gts.size()},
                      {"malformed", malformed},
                      {"metrics",
                       {{"l2", r.l2},
                        {"geodesic_deg", r.geodesic_deg},
                        {"count", r.count},
                        {"size_acc", r.size_acc},
                        {"color_acc", r.color_acc},
                        {"material_acc", r.material_acc},
                        {"shape_acc", r.shape_acc},
                        {"category_acc", r.category_acc},
                        {"chamfer", r.chamfer},
                        {"malformed_rate", r.malformed_rate}}}};
    write_text_atomic(out_dir / "report.json", jr.dump(2) + "\n");

    // per_scene.csv
    {
        std::string csv = "index,pred_objects,gt_objects,count_err,l2,geodesic_deg,chamfer,malformed\n";
        for (const eval::SceneRow& row : outcome.result.rows) {
            csv += std::to_string(row.index) + ',' + std::to_string(row.pred_objects) + ',' +
                   std::to_string(row.gt_objects) + ',' + fmt_g(row.count_err) + ',' + fmt_g(row.l2) + ',' +
                   fmt_g(row.geodesic_deg) + ',' + fmt_g(row.chamfer) + ',' + (row.malformed ? "1" : "0") + '\n';
        }
        write_text_atomic(out_dir / "per_scene.csv", csv);
    }

    // predictions.jsonl (decoded programs, when a checkpoint was the source)
    if (!spec.pred_checkpoint.empty()) {
        std::string lines;
        for (std::size_t i = 0; i < outcome.predictions.size(); ++i) {
            nlohmann::json j{{"index", gt_records[i].index},
                             {"program", outcome.predictions[i].has_value()
                                             ? nlohmann::json(outcome.predictions[i]->str())
                                             : nlohmann::json(nullptr)}};
            lines += j.dump() + "\n";
        }
        write_text_atomic(out_dir / "predictions.jsonl", lines);
    }

    // scatter.csv for single-object tasks (the dot experiments)
    bool single = true;
    for (const scene::SceneProgram& g : gts)
        if (g.objects.size() != 1) single = false;
    if (single) {
        std::string csv = "gt_x,gt_y,pred_x,pred_y\n";
        for (std::size_t i = 0; i < gts.size(); ++i) {
            csv += fmt_g(gts[i].objects[0].location.x()) + ',' + fmt_g(gts[i].objects[0].location.y()) + ',';
            if (pred_scenes[i].has_value() && pred_scenes[i]->objects.size() == 1) {
                csv += fmt_g(pred_scenes[i]->objects[0].location.x()) + ',' +
                       fmt_g(pred_scenes[i]->objects[0].location.y());
            } else {
                csv += ',';
            }
            csv += '\n';
        }
        write_text_atomic(out_dir / "scatter.csv", csv);
    }

    ManifestInfo info;
    info.command = "eval";
    info.config = spec.to_json();
    info.seed = spec.chamfer_seed;
    info.inputs = {spec.gt_file.string(),
                   spec.pred_checkpoint.empty() ? spec.pred_file.string() : spec.pred_checkpoint.string()};
    info.outputs = {(out_dir / "report.json").string(), (out_dir / "report.csv").string(),
                    (out_dir / "per_scene.csv").string()};
    info.duration_seconds = seconds_since(t0);
    write_manifest(out_dir, info);
    marker.complete();
    return outcome;
}

}  // namespace derender::pipe
