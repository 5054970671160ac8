#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "nseg/arch/network_spec.hpp"
#include "nseg/cli/cli.hpp"
#include "nseg/data/image.hpp"

namespace nseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

struct Context {
    RunConfig run;
    std::ostream& out;
    std::ostream& err;
    bool quiet;

    void info(const std::string& msg) const {
        if (!quiet) err << msg << '\n';
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw ConfigError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Output directories owned by a command must be new or empty unless --force.
void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!force) throw ConfigError(dir.string() + " is not empty (use --force to replace its contents)");
            for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
        }
    }
    fs::create_directories(dir);
}

void echo_config(const fs::path& dir, const std::string& command, const json& args, const RunConfig& run) {
    write_json(dir / "config.json", {{"command", command}, {"args", args}, {"config", to_json(run)}});
}

std::string path_arg(const std::optional<fs::path>& p) { return p ? p->string() : std::string(); }

data::LoadResult load_reporting(const fs::path& root, const Context& ctx) {
    auto loaded = data::load_dsb(root);
    for (const auto& issue : loaded.issues) ctx.info("warning: " + issue.image_id + ": " + issue.message);
    return loaded;
}

// ---- synth ----

struct SynthArgs {
    fs::path out;
    std::optional<int> count;
    std::optional<std::string> dims;
    bool force = false;
};

void cmd_synth(const SynthArgs& a, Context& ctx) {
    auto& s = ctx.run.synth;
    if (a.count) s.count = *a.count;
    if (a.dims) std::tie(s.height, s.width) = parse_dims(*a.dims);
    s.validate();
    const auto samples = data::synth_generate(s);
    prepare_out_dir(a.out, a.force);
    data::write_dsb(a.out, samples);
    echo_config(a.out, "synth", {{"out", a.out.string()}}, ctx.run);
    ctx.info(fmt::format("wrote {} samples ({}x{}) to {}", samples.size(), s.height, s.width, a.out.string()));
}

// ---- augment ----

struct AugmentArgs {
    fs::path in, out;
    std::optional<int> factor;
    bool force = false;
};

void copy_sample_bytes(const fs::path& src_root, const std::string& src_id, const fs::path& dst_root,
                       const std::string& dst_id) {
    const fs::path src = src_root / src_id, dst = dst_root / dst_id;
    fs::create_directories(dst / "images");
    fs::create_directories(dst / "masks");
    fs::copy_file(src / "images" / (src_id + ".png"), dst / "images" / (dst_id + ".png"));
    if (fs::is_directory(src / "masks"))
        for (const auto& e : fs::directory_iterator(src / "masks"))
            if (e.is_regular_file() && e.path().extension() == ".png")
                fs::copy_file(e.path(), dst / "masks" / e.path().filename());
}

void cmd_augment(const AugmentArgs& a, Context& ctx) {
    auto& cfg = ctx.run.augment;
    if (a.factor) cfg.replication_factor = *a.factor;
    cfg.validate();
    if (fs::weakly_canonical(a.in) == fs::weakly_canonical(a.out))
        throw ConfigError("augment output must differ from its input");
    const auto loaded = load_reporting(a.in, ctx);
    const auto augmented = augment::augment_dataset(loaded.samples, cfg, ctx.run.seed);
    prepare_out_dir(a.out, a.force);
    std::size_t dropped = 0;
    for (const auto& s : augmented) {
        // An empty op chain leaves the pixels untouched, so the source files are copied as they are.
        if (s.ops.empty())
            copy_sample_bytes(a.in, s.source_id, a.out, s.sample.image_id);
        else
            data::write_sample(a.out, s.sample);
        write_json(a.out / s.sample.image_id / "provenance.json", augment::provenance_json(s));
        dropped += static_cast<std::size_t>(s.dropped_instances);
    }
    echo_config(a.out, "augment", {{"in", a.in.string()}, {"out", a.out.string()}}, ctx.run);
    ctx.info(fmt::format("augmented {} samples into {} (factor {}, {} instances dropped by zoom)",
                         loaded.samples.size(), augmented.size(), cfg.replication_factor, dropped));
}

// ---- train ----

struct TrainArgs {
    fs::path data, out;
    std::optional<std::string> model, preset;
    std::optional<int> scale, epochs, batch_size, patience, growth_rate;
    std::optional<double> lr;
    bool force = false;
};

void cmd_train(const TrainArgs& a, Context& ctx) {
    auto& t = ctx.run.train;
    if (a.model) t.model = arch::parse_model(*a.model);
    if (a.preset && *a.preset == "desk") {
        const auto d = train::desk_preset(t.model);
        t.scale = d.scale;
        t.learning_rate = d.learning_rate;
        t.batch_size = d.batch_size;
        t.growth_rate = d.growth_rate;
    }
    if (a.scale) t.scale = *a.scale;
    if (a.epochs) t.max_epochs = *a.epochs;
    if (a.batch_size) t.batch_size = *a.batch_size;
    if (a.patience) t.patience = *a.patience;
    if (a.growth_rate) t.growth_rate = *a.growth_rate;
    if (a.lr) t.learning_rate = *a.lr;
    t.validate();

    const auto loaded = load_reporting(a.data, ctx);
    const auto split = data::split_indices(loaded.samples.size(), ctx.run.split);
    std::vector<data::Sample> tr, va;
    std::vector<std::string> tr_ids, va_ids;
    for (auto i : split.train) {
        tr.push_back(loaded.samples[i]);
        tr_ids.push_back(loaded.samples[i].image_id);
    }
    for (auto i : split.eval) {
        va.push_back(loaded.samples[i]);
        va_ids.push_back(loaded.samples[i].image_id);
    }

    const auto spec = arch::build_network(t.model, t.architecture());
    prepare_out_dir(a.out, a.force);
    data::write_manifest(a.out / "train_ids.txt", tr_ids);
    data::write_manifest(a.out / "val_ids.txt", va_ids);
    echo_config(a.out, "train", {{"data", a.data.string()}, {"out", a.out.string()}}, ctx.run);
    ctx.info(fmt::format("training {} (scale {}, {} params) on {} samples, validating on {}", display_name(t.model),
                         t.scale, arch::parameter_count(spec), tr.size(), va.size()));

    const auto val_set = train::prepare(va, spec);
    train::TrainHooks hooks;
    hooks.progress = !ctx.quiet;
    const auto result = train::train(spec, train::prepare(tr, spec), val_set, t, hooks);

    arch::Model<float> best(spec, 0);
    best.load_state(result.best_state);
    train::save_model(a.out / "model.nseg", best, train::model_metadata(spec, t));
    write_text(a.out / "history.csv", train::history_csv(result.history));
    write_json(a.out / "history.json", train::history_json(result.history));

    const auto ev = train::evaluate(best, val_set, ctx.run.sweep, t.binarize_threshold, t.effective_batch_size());
    ctx.info(fmt::format("stopped: {} after {} epochs, best epoch {}", train::to_string(result.history.stop_reason),
                         result.history.epochs.size(), result.history.best_epoch));
    ctx.out << summary_row(display_name(t.model), arch::full_string(spec.input), arch::full_string(spec.output),
                           ev.map)
            << '\n';
}

// ---- eval ----

struct EvalArgs {
    std::optional<fs::path> checkpoint, pred, ids;
    fs::path data, report;
    std::optional<std::string> model;
    std::string mode = "greedy";
};

json summary_json(const std::string& model, const std::string& input, const std::string& output,
                  const train::EvalResult& r, const RunConfig& run, const std::string& mode, bool has_loss) {
    std::vector<double> mean_p(run.sweep.thresholds.size(), 0.0);
    for (const auto& im : r.images)
        for (std::size_t k = 0; k < mean_p.size(); ++k) mean_p[k] += im.score.precisions[k];
    for (auto& v : mean_p) v /= static_cast<double>(r.images.size());
    return {{"model", model},
            {"input_size", input},
            {"output_size", output},
            {"map", r.map},
            {"mean_loss", has_loss ? json(r.mean_loss) : json(nullptr)},
            {"images", r.images.size()},
            {"match_mode", mode},
            {"binarize_threshold", run.train.binarize_threshold},
            {"thresholds", run.sweep.thresholds},
            {"mean_precision", mean_p}};
}

std::vector<data::Sample> select_ids(std::vector<data::Sample> samples, const std::optional<fs::path>& ids) {
    if (!ids) return samples;
    const auto wanted = data::read_manifest(*ids);
    std::vector<data::Sample> out;
    for (const auto& id : wanted) {
        auto it = std::find_if(samples.begin(), samples.end(), [&](const auto& s) { return s.image_id == id; });
        if (it == samples.end()) throw ConfigError("manifest id " + id + " is not in the dataset");
        out.push_back(std::move(*it));
    }
    if (out.empty()) throw ConfigError("manifest " + ids->string() + " lists no samples");
    return out;
}

fs::path prediction_file(const fs::path& dir, const std::string& id) {
    for (const auto& name : {id + "_instances.png", id + ".png"})
        if (fs::exists(dir / name)) return dir / name;
    throw InputError("no prediction for " + id + " in " + dir.string());
}

void cmd_eval(const EvalArgs& a, Context& ctx) {
    const auto mode = metrics::parse_match_mode(a.mode);
    ctx.run.sweep.validate();
    const auto samples = select_ids(load_reporting(a.data, ctx).samples, a.ids);

    train::EvalResult r;
    std::string model, input, output;
    bool has_loss = true;
    if (a.checkpoint) {
        if (!fs::exists(*a.checkpoint)) throw CheckpointError(CheckpointError::Kind::io, "checkpoint " + a.checkpoint->string() + " does not exist");
        auto loaded = train::load_model(*a.checkpoint, a.model ? std::optional(arch::parse_model(*a.model)) : std::nullopt);
        const auto& spec = loaded.model.spec();
        const double thr = loaded.metadata.at("config").value("binarize_threshold", ctx.run.train.binarize_threshold);
        ctx.run.train.binarize_threshold = thr;
        r = train::evaluate(loaded.model, train::prepare(samples, spec), ctx.run.sweep, thr,
                            ctx.run.train.effective_batch_size(), mode);
        model = display_name(spec.model);
        input = arch::full_string(spec.input);
        output = arch::full_string(spec.output);
    } else {
        has_loss = false;
        std::vector<double> maps;
        for (const auto& s : samples) {
            const auto pred = read_instance_png(data::read_png(prediction_file(*a.pred, s.image_id)));
            auto gt = s.instance_labels;
            if (gt.height() != pred.height() || gt.width() != pred.width())
                gt = data::resize_nearest(gt, pred.height(), pred.width());
            auto score = metrics::score_image(pred, gt, ctx.run.sweep, mode);
            maps.push_back(score.map);
            if (output.empty()) output = arch::full_string({pred.height(), pred.width(), 1});
            r.images.push_back({s.image_id, std::move(score)});
        }
        r.map = metrics::map_dataset(maps);
        model = "predictions";
        input = "-";
    }

    fs::create_directories(a.report);
    write_text(a.report / "per_image.csv", train::per_image_csv(r, ctx.run.sweep));
    write_json(a.report / "summary.json", summary_json(model, input, output, r, ctx.run, a.mode, has_loss));
    echo_config(a.report, "eval",
                {{"checkpoint", path_arg(a.checkpoint)}, {"pred", path_arg(a.pred)}, {"data", a.data.string()},
                 {"ids", path_arg(a.ids)}, {"report", a.report.string()}, {"mode", a.mode}},
                ctx.run);
    ctx.out << summary_row(model, input, output, r.map) << '\n';
}

// ---- trace ----

struct TraceArgs {
    std::string model;
    int scale = 1;
    std::optional<int> growth_rate, input_size;
    bool json = false, layers = false;
};

json trace_json(const arch::NetworkSpec& spec) {
    json stages = json::array(), layers = json::array();
    for (const auto& s : arch::stage_table(spec))
        stages.push_back({{"label", s.label},
                          {"feature_size", arch::spatial_string(s.shape)},
                          {"shape", {s.shape.h, s.shape.w, s.shape.c}},
                          {"description", s.description}});
    for (const auto& r : arch::shape_trace(spec))
        layers.push_back({{"layer", r.layer},
                          {"kind", arch::to_string(r.kind)},
                          {"stage", r.stage},
                          {"shape", {r.shape.h, r.shape.w, r.shape.c}},
                          {"params", r.params}});
    return {{"model", arch::to_string(spec.model)},
            {"scale", spec.scale},
            {"growth_rate", spec.growth_rate},
            {"input", arch::full_string(spec.input)},
            {"output", arch::full_string(spec.output)},
            {"parameters", arch::parameter_count(spec)},
            {"stages", stages},
            {"layers", layers}};
}

void cmd_trace(const TraceArgs& a, Context& ctx) {
    arch::ArchitectureOptions o;
    o.scale = a.scale;
    o.growth_rate = a.growth_rate;
    o.input_size = a.input_size;
    const auto spec = arch::build_network(arch::parse_model(a.model), o);
    if (a.json) {
        ctx.out << trace_json(spec).dump(2) << '\n';
        return;
    }
    ctx.out << "Layers\tFeature Size\t" << display_name(spec.model) << '\n';
    for (const auto& s : arch::stage_table(spec))
        ctx.out << s.label << '\t' << arch::spatial_string(s.shape) << '\t' << s.description << '\n';
    ctx.out << fmt::format("\ninput {}  output {}  parameters {}\n", arch::full_string(spec.input),
                           arch::full_string(spec.output), arch::parameter_count(spec));
    if (a.layers) {
        ctx.out << "\nlayer\tkind\tshape\tparams\n";
        for (const auto& r : arch::shape_trace(spec))
            ctx.out << r.layer << '\t' << arch::to_string(r.kind) << '\t' << arch::full_string(r.shape) << '\t'
                    << r.params << '\n';
    }
}

// ---- predict ----

struct PredictArgs {
    fs::path checkpoint, image, out;
    bool upscale = false;
};

void cmd_predict(const PredictArgs& a, Context& ctx) {
    auto loaded = train::load_model(a.checkpoint);
    const auto image = data::read_png(a.image);
    const double thr = loaded.metadata.at("config").value("binarize_threshold", 0.5);
    const auto p = train::predict(loaded.model, image, thr);

    data::Image8 prob(p.h, p.w, 1);
    for (std::size_t i = 0; i < p.prob.size(); ++i)
        prob.px[i] = static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(p.prob[i])));
    auto labels = p.labels;
    if (a.upscale) {
        prob = data::resize_nearest(prob, image.h, image.w);
        labels = data::resize_nearest(labels, image.h, image.w);
    }
    fs::create_directories(a.out);
    const auto stem = a.image.stem().string();
    data::write_png(a.out / (stem + "_prob.png"), prob);
    data::write_png(a.out / (stem + "_instances.png"), instance_png(labels));
    ctx.out << fmt::format("{}\t{} instances\n", stem, labels.num_instances());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Nuclei segmentation pipeline: synthetic data, augmentation, U-Net/DenseUNet training and mAP evaluation",
                 "nseg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "nseg 1.0");
    Globals g;
    app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every random component");
    app.add_flag("--quiet", g.quiet, "Suppress progress and warnings on stderr");
    const std::vector<std::string> models{"unet", "denseunet"};
    const CLI::Range positive(1, std::numeric_limits<int>::max());
    const CLI::Validator dims_check(
        [](std::string& s) {
            try {
                parse_dims(s);
            } catch (const ConfigError& e) {
                return std::string(e.what());
            }
            return std::string();
        },
        "HxW");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset in the DSB folder layout");
    synth->add_option("--out", sa.out, "Output dataset root")->required();
    synth->add_option("--count", sa.count, "Number of samples")->check(positive);
    synth->add_option("--dims", sa.dims, "Image size, e.g. 64x64")->check(dims_check);
    synth->add_flag("--force", sa.force, "Replace a non-empty output directory");

    AugmentArgs aa;
    auto* aug = app.add_subcommand("augment", "Write factor augmented copies of every sample");
    aug->add_option("--in", aa.in, "Input dataset root")->required()->check(CLI::ExistingDirectory);
    aug->add_option("--out", aa.out, "Output dataset root")->required();
    aug->add_option("--factor", aa.factor, "Copies per input sample (default 5)")->check(positive);
    aug->add_flag("--force", aa.force, "Replace a non-empty output directory");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Split, train with early stopping, write checkpoint and history");
    tr->add_option("--data", ta.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", ta.out, "Run directory")->required();
    tr->add_option("--model", ta.model, "Architecture")->check(CLI::IsMember(models));
    tr->add_option("--scale", ta.scale, "Divisor for input size and channel widths (1, 2, 4, 8)");
    tr->add_option("--preset", ta.preset, "desk: scale 8 settings that converge on synthetic data")
        ->check(CLI::IsMember({"default", "desk"}));
    tr->add_option("--epochs", ta.epochs, "Maximum epochs")->check(positive);
    tr->add_option("--batch-size", ta.batch_size, "Batch size")->check(positive);
    tr->add_option("--patience", ta.patience, "Early-stopping patience")->check(positive);
    tr->add_option("--growth-rate", ta.growth_rate, "DenseUNet growth rate")->check(positive);
    tr->add_option("--lr", ta.lr, "Learning rate")->check(CLI::NonNegativeNumber);
    tr->add_flag("--force", ta.force, "Replace a non-empty run directory");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score a checkpoint or saved predictions; print a summary row");
    auto* ck = ev->add_option("--checkpoint", ea.checkpoint, "Model checkpoint");
    auto* pr = ev->add_option("--pred", ea.pred, "Directory of <id>_instances.png predictions")
                   ->check(CLI::ExistingDirectory);
    ck->excludes(pr);
    ev->add_option("--data", ea.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--report", ea.report, "Report directory")->required();
    ev->add_option("--ids", ea.ids, "Manifest restricting the evaluated ids")->check(CLI::ExistingFile);
    ev->add_option("--model", ea.model, "Expected architecture")->check(CLI::IsMember(models));
    ev->add_option("--match", ea.mode, "Instance matching")->check(CLI::IsMember({"greedy", "optimal"}));

    TraceArgs xa;
    auto* trace = app.add_subcommand("trace", "Print the architecture table");
    trace->add_option("--model", xa.model, "Architecture")->required()->check(CLI::IsMember(models));
    trace->add_option("--scale", xa.scale, "Divisor for input size and channel widths");
    trace->add_option("--growth-rate", xa.growth_rate, "DenseUNet growth rate")->check(positive);
    trace->add_option("--input-size", xa.input_size, "Square input size")->check(positive);
    trace->add_flag("--json", xa.json, "Emit JSON");
    trace->add_flag("--layers", xa.layers, "Append the per-layer trace");

    PredictArgs pa;
    auto* pred = app.add_subcommand("predict", "Write probability and instance PNGs for one image");
    pred->add_option("--checkpoint", pa.checkpoint, "Model checkpoint")->required();
    pred->add_option("--image", pa.image, "Input PNG")->required();
    pred->add_option("--out", pa.out, "Output directory")->required();
    pred->add_flag("--upscale", pa.upscale, "Resize outputs to the source resolution");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
        if (*ev && !ea.checkpoint && !ea.pred) throw CLI::RequiredError("eval needs --checkpoint or --pred");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string("nseg 1.0\n") : app.help());
            return kOk;
        }
        err << "usage error: " << e.what() << '\n';
        if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
            err << "run 'nseg " << sub->get_name() << " --help' for options\n";
        else
            err << "run 'nseg --help' for commands\n";
        return kUsageError;
    }

    try {
        Context ctx{g.config ? load_run_config(*g.config) : RunConfig{}, out, err, g.quiet};
        if (g.seed) {
            ctx.run.seed = *g.seed;
            ctx.run.propagate_seed();
        }
        if (*synth) cmd_synth(sa, ctx);
        else if (*aug) cmd_augment(aa, ctx);
        else if (*tr) cmd_train(ta, ctx);
        else if (*ev) cmd_eval(ea, ctx);
        else if (*trace) cmd_trace(xa, ctx);
        else cmd_predict(pa, ctx);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDomainError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDomainError;
    }
    return kOk;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace nseg::cli
