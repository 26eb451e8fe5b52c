// derender: command-line surface over the generators, trainer, evaluator and
// plot emitters.  Subcommands: gen, train, eval, plot.  Global flags --seed,
// --threads and --config (a JSON file of option defaults); DERENDER_DATA_DIR
// sets the default data root.  Exit codes: 0 success, 2 configuration error,
// 3 data error, 4 training divergence.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "derender/common.hpp"
#include "derender/pipeline.hpp"
#include "derender/svgplot.hpp"

namespace {

namespace fs = std::filesystem;
using derender::Errc;
using derender::Error;
using nlohmann::json;

// --config is honoured before regular parsing so flags given on the command
// line still take precedence over file-provided defaults.
json load_config(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0) path = arg.substr(9);
    }
    if (path.empty()) return json::object();
    std::ifstream in(path, std::ios::binary);
    derender::require(in.good(), Errc::invalid_config, "cannot open config file " + path);
    json j = json::parse(in, nullptr, false);
    derender::require(!j.is_discarded() && j.is_object(), Errc::invalid_config,
                      "config file " + path + " is not a JSON object");
    return j;
}

template <typename T>
void cfg_get(const json& cfg, const std::string& section, const std::string& key, T& out) {
    if (cfg.contains(section) && cfg[section].contains(key)) out = cfg[section][key].get<T>();
}

void write_file(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        derender::require(out.good(), Errc::io_error, "cannot open " + tmp.string() + " for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        derender::require(out.good(), Errc::io_error, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    derender::require(!ec, Errc::io_error, "cannot move " + tmp.string() + " into place");
}

int run(int argc, char** argv) {
    json cfg = load_config(argc, argv);

    CLI::App app{"desk-scale inverse-graphics workbench"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "0.1.0");

    std::uint64_t seed = 1;
    int threads = 1;
    std::string config_path;
    cfg_get(cfg, "global", "seed", seed);
    cfg_get(cfg, "global", "threads", threads);
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
    app.add_option("--threads", threads, "worker-thread cap")->capture_default_str();
    app.add_option("--config", config_path, "JSON file of option defaults");

    // gen ----------------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("gen", "generate a dataset");
    derender::pipe::GenSpec gen_spec;
    std::string gen_out;
    cfg_get(cfg, "gen", "n", gen_spec.n);
    cfg_get(cfg, "gen", "n_val", gen_spec.n_val);
    cfg_get(cfg, "gen", "dist", gen_spec.dist);
    gen_cmd->add_option("--task", gen_spec.task, "cogent | dot2d | so3 | scene6dof")->required();
    gen_cmd->add_option("--n", gen_spec.n, "records in the requested split")->capture_default_str();
    gen_cmd->add_option("--n-val", gen_spec.n_val, "dot2d: records per evaluation split")->capture_default_str();
    gen_cmd->add_option("--split", gen_spec.split, "cogent/so3: train | val_id | val_ood")->capture_default_str();
    std::string condition = "A";
    gen_cmd->add_option("--condition", condition, "cogent: A | B")->capture_default_str();
    gen_cmd->add_option("--dist", gen_spec.dist, "dot2d: checkerboard | uniform")->capture_default_str();
    gen_cmd->add_option("--region", gen_spec.region, "so3: id | gaps")->capture_default_str();
    gen_cmd->add_option("--scene6dof-split", gen_spec.scene6dof_split, "train | ood_texture | ood_shape")
        ->capture_default_str();
    gen_cmd->add_option("--out", gen_out, "output directory (default: <data root>/<task>)");

    // train --------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a model on a rasterised dataset");
    std::string train_mode, train_task = "dot2d", train_data, train_out;
    int steps = 0, batch = 0, warmup = -1, val_every = -1, val_max = -1;
    double lr_max = 0, lr_min = -1, w_ce = -1, w_mse = -1;
    train_cmd->add_option("--mode", train_mode, "float | char")->required();
    train_cmd->add_option("--task", train_task, "task id")->capture_default_str();
    train_cmd->add_option("--data", train_data, "dataset directory (default: <data root>/<task>)");
    train_cmd->add_option("--out", train_out, "run output directory")->required();
    train_cmd->add_option("--steps", steps, "optimisation steps");
    train_cmd->add_option("--batch", batch, "batch size");
    train_cmd->add_option("--lr-max", lr_max, "peak learning rate");
    train_cmd->add_option("--lr-min", lr_min, "final learning rate");
    train_cmd->add_option("--warmup", warmup, "linear warmup steps");
    train_cmd->add_option("--val-every", val_every, "steps between validation passes");
    train_cmd->add_option("--val-max", val_max, "validation sample cap");
    train_cmd->add_option("--w-ce", w_ce, "token loss weight");
    train_cmd->add_option("--w-mse", w_mse, "numeric loss weight");

    // eval ---------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against a dataset");
    derender::pipe::EvalSpec eval_spec;
    std::string eval_gt, eval_ck, eval_pred, eval_out, eval_repr = "ext_euler";
    eval_cmd->add_option("--task", eval_spec.task, "cogent | dot2d | so3 | scene6dof")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground-truth dataset JSONL")->required();
    eval_cmd->add_option("--checkpoint", eval_ck, "model checkpoint to decode");
    eval_cmd->add_option("--pred", eval_pred, "predicted-program JSONL");
    eval_cmd->add_option("--out", eval_out, "report output directory")->required();
    eval_cmd->add_flag("--chamfer", eval_spec.with_chamfer, "also compute scene chamfer distance");
    eval_cmd->add_option("--chamfer-points", eval_spec.chamfer_points, "surface samples per object")
        ->capture_default_str();
    eval_cmd->add_option("--rotation-repr", eval_repr, "repr assumed for 3-value rotation tuples")
        ->capture_default_str();

    // plot ---------------------------------------------------------------
    auto* plot_cmd = app.add_subcommand("plot", "emit an SVG plot with a CSV sidecar");
    std::string plot_kind, plot_out;
    std::vector<std::string> plot_inputs, plot_labels;
    plot_cmd->add_option("--kind", plot_kind, "scatter2d | id_ood_bars | dynamics")->required();
    plot_cmd->add_option("--input", plot_inputs, "input CSV file(s)")->required();
    plot_cmd->add_option("--label", plot_labels, "series label per input (dynamics)");
    plot_cmd->add_option("--out", plot_out, "output SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);  // prints the message or help text
        return rc == 0 ? 0 : 2;
    }

    fs::path data_root = derender::pipe::default_data_dir();

    if (gen_cmd->parsed()) {
        derender::require(condition.size() == 1 && (condition == "A" || condition == "B"), Errc::invalid_config,
                          "--condition must be A or B");
        gen_spec.condition = condition[0];
        gen_spec.seed = seed;
        gen_spec.threads = threads;
        fs::path out = gen_out.empty() ? data_root / gen_spec.task : fs::path(gen_out);
        derender::pipe::GenResult result = derender::pipe::run_gen(gen_spec, out);
        for (const fs::path& f : result.files) std::printf("wrote %s\n", f.string().c_str());
        return 0;
    }

    if (train_cmd->parsed()) {
        fs::path data = train_data.empty() ? data_root / train_task : fs::path(train_data);
        derender::pipe::TrainSpec spec = derender::pipe::dot2d_train_defaults(data, train_mode, seed);
        spec.task = train_task;
        cfg_get(cfg, "train", "steps", spec.train.steps);
        cfg_get(cfg, "train", "batch", spec.train.batch_size);
        cfg_get(cfg, "train", "lr_max", spec.train.lr_max);
        cfg_get(cfg, "train", "lr_min", spec.train.lr_min);
        cfg_get(cfg, "train", "warmup", spec.train.warmup);
        cfg_get(cfg, "train", "val_every", spec.train.val_every);
        cfg_get(cfg, "train", "val_max", spec.train.val_max);
        cfg_get(cfg, "train", "w_ce", spec.train.w_ce);
        cfg_get(cfg, "train", "w_mse", spec.train.w_mse);
        if (steps > 0) spec.train.steps = steps;
        if (batch > 0) spec.train.batch_size = batch;
        if (lr_max > 0) spec.train.lr_max = lr_max;
        if (lr_min >= 0) spec.train.lr_min = lr_min;
        if (warmup >= 0) spec.train.warmup = warmup;
        if (val_every >= 0) spec.train.val_every = val_every;
        if (val_max >= 0) spec.train.val_max = val_max;
        if (w_ce >= 0) spec.train.w_ce = w_ce;
        if (w_mse >= 0) spec.train.w_mse = w_mse;
        derender::pipe::TrainOutcome outcome = derender::pipe::run_train(spec, train_out);
        std::printf("wrote %s\n", outcome.checkpoint.string().c_str());
        std::printf("wrote %s\n", outcome.trace_csv.string().c_str());
        std::printf("final validation mse: %.8g\n", outcome.result.final_val);
        return 0;
    }

    if (eval_cmd->parsed()) {
        eval_spec.gt_file = eval_gt;
        eval_spec.pred_checkpoint = eval_ck;
        eval_spec.pred_file = eval_pred;
        eval_spec.three_value_repr = derender::dsl::rotation_repr_from_name(eval_repr);
        eval_spec.chamfer_seed = seed;
        eval_spec.threads = threads;
        derender::pipe::EvalOutcome outcome = derender::pipe::run_eval(eval_spec, eval_out);
        std::printf("%s\n", derender::eval::MetricReport::csv_header().c_str());
        std::printf("%s\n", outcome.result.report.csv_row().c_str());
        return 0;
    }

    if (plot_cmd->parsed()) {
        derender::plot::PlotOutput out;
        if (plot_kind == "scatter2d") {
            derender::require(plot_inputs.size() == 1, Errc::invalid_config, "scatter2d takes one --input");
            out = derender::plot::scatter2d(derender::plot::Csv::read_file(plot_inputs[0]));
        } else if (plot_kind == "id_ood_bars") {
            derender::require(plot_inputs.size() == 1, Errc::invalid_config, "id_ood_bars takes one --input");
            out = derender::plot::id_ood_bars(derender::plot::Csv::read_file(plot_inputs[0]));
        } else if (plot_kind == "dynamics") {
            std::vector<std::pair<std::string, derender::plot::Csv>> series;
            for (std::size_t i = 0; i < plot_inputs.size(); ++i) {
                std::string label = i < plot_labels.size() ? plot_labels[i] : fs::path(plot_inputs[i]).stem().string();
                series.emplace_back(label, derender::plot::Csv::read_file(plot_inputs[i]));
            }
            out = derender::plot::dynamics(series);
        } else {
            derender::fail(Errc::invalid_config, "unknown plot kind '" + plot_kind + "'");
        }
        fs::path svg_path(plot_out);
        if (svg_path.has_parent_path()) {
            std::error_code ec;
            fs::create_directories(svg_path.parent_path(), ec);
        }
        fs::path sidecar = svg_path;
        sidecar.replace_extension(".csv");
        write_file(svg_path, out.svg);
        write_file(sidecar, out.sidecar.dump());

        derender::pipe::ManifestInfo info;
        info.command = "plot";
        info.config = json{{"kind", plot_kind}, {"inputs", plot_inputs}, {"out", plot_out}};
        info.seed = seed;
        info.inputs = plot_inputs;
        info.outputs = {svg_path.string(), sidecar.string()};
        derender::pipe::write_manifest(svg_path.has_parent_path() ? svg_path.parent_path() : fs::path("."), info);
        std::printf("wrote %s\n", svg_path.string().c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.code()) {
            case Errc::invalid_config: return 2;
            case Errc::divergence_detected: return 4;
            default: return 3;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
