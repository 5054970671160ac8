#include "nseg/train/train.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "nseg/core/checkpoint.hpp"
#include "nseg/core/ops.hpp"
#include "nseg/core/optim.hpp"
#include "nseg/core/seed.hpp"

namespace nseg::train {

using nlohmann::json;

arch::ArchitectureOptions TrainConfig::architecture() const {
    arch::ArchitectureOptions o;
    o.scale = scale;
    o.input_size = input_size;
    o.growth_rate = growth_rate;
    o.dropout_rate = dropout_rate;
    return o;
}

void TrainConfig::validate() const {
    // Zero is allowed so a frozen model can be trained as a control.
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (batch_size && *batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (growth_rate && *growth_rate < 1) throw ConfigError("growth_rate must be >= 1");
    if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) throw ConfigError("binarize_threshold must be in (0, 1)");
    if (!(min_improvement >= 0.0)) throw ConfigError("min_improvement must be >= 0");
    arch::build_network(model, architecture());  // validates scale and input size
}

TrainConfig desk_preset(arch::ModelKind model) {
    TrainConfig c;
    c.model = model;
    c.scale = 8;
    c.learning_rate = 0.01;
    c.batch_size = 4;
    if (model == arch::ModelKind::denseunet) c.growth_rate = 4;
    return c;
}

json to_json(const TrainConfig& c) {
    auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"learning_rate", c.learning_rate},
                {"momentum", c.momentum},
                {"dropout_rate", c.dropout_rate},
                {"patience", c.patience},
                {"max_epochs", c.max_epochs},
                {"batch_size", opt(c.batch_size)},
                {"seed", c.seed},
                {"model", arch::to_string(c.model)},
                {"scale", c.scale},
                {"growth_rate", opt(c.growth_rate)},
                {"input_size", opt(c.input_size)},
                {"binarize_threshold", c.binarize_threshold},
                {"min_improvement", c.min_improvement}};
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    TrainConfig c;
    const json known = to_json(c);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown training key '" + key + "'");
    try {
        auto opt = [&](const char* k, std::optional<int>& out) {
            if (!j.contains(k)) return;
            out = j.at(k).is_null() ? std::nullopt : std::optional<int>(j.at(k).get<int>());
        };
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
        if (j.contains("dropout_rate")) c.dropout_rate = j.at("dropout_rate").get<double>();
        if (j.contains("patience")) c.patience = j.at("patience").get<int>();
        if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
        opt("batch_size", c.batch_size);
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("model")) c.model = arch::parse_model(j.at("model").get<std::string>());
        if (j.contains("scale")) c.scale = j.at("scale").get<int>();
        opt("growth_rate", c.growth_rate);
        opt("input_size", c.input_size);
        if (j.contains("binarize_threshold")) c.binarize_threshold = j.at("binarize_threshold").get<double>();
        if (j.contains("min_improvement")) c.min_improvement = j.at("min_improvement").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad training config: ") + e.what());
    }
    c.validate();
    return c;
}

const char* to_string(StopReason r) { return r == StopReason::early_stop ? "early_stop" : "max_epochs"; }

std::string history_csv(const History& h) {
    std::string out = "epoch,train_loss,val_loss,val_map\n";
    for (const auto& e : h.epochs)
        out += fmt::format("{},{:.9g},{:.9g},{:.9g}\n", e.epoch, e.train_loss, e.val_loss, e.val_map);
    out += fmt::format("# stop_reason={} best_epoch={}\n", to_string(h.stop_reason), h.best_epoch);
    return out;
}

json history_json(const History& h) {
    json epochs = json::array();
    for (const auto& e : h.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"val_map", e.val_map},
                          {"seconds", e.seconds}});
    return {{"epochs", epochs}, {"stop_reason", to_string(h.stop_reason)}, {"best_epoch", h.best_epoch}};
}

IoSizes io_sizes(const arch::NetworkSpec& spec) { return {spec.input.h, spec.output.h}; }

std::vector<data::NetworkPair> prepare(const std::vector<data::Sample>& samples, const arch::NetworkSpec& spec) {
    const auto io = io_sizes(spec);
    std::vector<data::NetworkPair> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(data::resize_sample(s, io.input, io.output));
    return out;
}

namespace {

struct Batch {
    Tensor<float> image, target;
};

Batch make_batch(const std::vector<data::NetworkPair>& set, const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t end) {
    const auto& first = set[idx[begin]];
    const auto n = static_cast<std::int64_t>(end - begin);
    Batch b{Tensor<float>(Shape{n, first.image_h, first.image_w, 3}),
            Tensor<float>(Shape{n, first.mask_h, first.mask_w, 1})};
    auto img = b.image.data();
    auto tgt = b.target.data();
    for (std::size_t i = begin; i < end; ++i) {
        const auto& p = set[idx[i]];
        if (p.image_h != first.image_h || p.mask_h != first.mask_h || p.image_w != first.image_w ||
            p.mask_w != first.mask_w)
            throw ShapeError("sample " + p.image_id + " was prepared at a different size");
        std::copy(p.image.begin(), p.image.end(), img.begin() + static_cast<std::ptrdiff_t>((i - begin) * p.image.size()));
        std::copy(p.mask.begin(), p.mask.end(), tgt.begin() + static_cast<std::ptrdiff_t>((i - begin) * p.mask.size()));
    }
    return b;
}

void check_compatible(const arch::NetworkSpec& spec, const std::vector<data::NetworkPair>& set, const char* what) {
    const auto io = io_sizes(spec);
    for (const auto& p : set)
        if (p.image_h != io.input || p.image_w != io.input || p.mask_h != io.output || p.mask_w != io.output)
            throw ConfigError(fmt::format("{} sample {} is {}x{} -> {}x{}, network expects {}x{} -> {}x{}", what,
                                          p.image_id, p.image_h, p.image_w, p.mask_h, p.mask_w, io.input, io.input,
                                          io.output, io.output));
}

}  // namespace

EvalResult evaluate(arch::Model<float>& model, const std::vector<data::NetworkPair>& set,
                    const metrics::ThresholdSweep& sweep, double binarize_threshold, int batch_size,
                    metrics::MatchMode mode) {
    if (set.empty()) throw ConfigError("evaluation set is empty");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    check_compatible(model.spec(), set, "evaluation");
    sweep.validate();
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 unused(0);  // dropout is inactive in eval mode

    EvalResult r;
    double loss_sum = 0.0;
    std::vector<double> maps;
    for (std::size_t b = 0; b < set.size(); b += static_cast<std::size_t>(batch_size)) {
        const auto e = std::min(set.size(), b + static_cast<std::size_t>(batch_size));
        const auto batch = make_batch(set, idx, b, e);
        Graph<float> g;
        auto pred = model.forward(g, g.constant(batch.image), Mode::eval, unused);
        const double loss = bce_loss(pred, batch.target).value()[0];
        loss_sum += loss * static_cast<double>(e - b);
        const auto& out = pred.value();
        const auto hw = static_cast<std::size_t>(set[b].mask_h * set[b].mask_w);
        for (std::size_t i = b; i < e; ++i) {
            const auto& p = set[i];
            std::span<const float> prob(out.data().data() + (i - b) * hw, hw);
            const auto inst = metrics::connected_components(prob, p.mask_h, p.mask_w, binarize_threshold);
            auto score = metrics::score_image(inst, p.labels, sweep, mode);
            maps.push_back(score.map);
            r.images.push_back({p.image_id, std::move(score)});
        }
    }
    r.mean_loss = loss_sum / static_cast<double>(set.size());
    r.map = metrics::map_dataset(maps);
    return r;
}

std::string per_image_csv(const EvalResult& r, const metrics::ThresholdSweep& sweep) {
    std::string out = "image_id,num_pred,num_gt";
    for (double t : sweep.thresholds) out += fmt::format(",p@{:.2f}", t);
    out += ",map\n";
    for (const auto& im : r.images) {
        out += fmt::format("{},{},{}", im.image_id, im.score.num_pred, im.score.num_gt);
        for (double p : im.score.precisions) out += fmt::format(",{:.6f}", p);
        out += fmt::format(",{:.6f}\n", im.score.map);
    }
    return out;
}

TrainResult train(const arch::NetworkSpec& spec, const std::vector<data::NetworkPair>& train_set,
                  const std::vector<data::NetworkPair>& val_set, const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");
    if (val_set.empty()) throw ConfigError("validation set is empty");
    check_compatible(spec, train_set, "training");
    check_compatible(spec, val_set, "validation");

    arch::Model<float> model(spec, derive_seed(config.seed, {1}));
    auto params = model.parameters();
    std::mt19937_64 dropout_rng(derive_seed(config.seed, {3}));
    const auto batch_size = static_cast<std::size_t>(config.effective_batch_size());

    TrainResult result;
    History& h = result.history;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(derive_seed(config.seed, {2, static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        int batch_no = 0;
        for (std::size_t b = 0; b < order.size(); b += batch_size, ++batch_no) {
            const auto e = std::min(order.size(), b + batch_size);
            const auto batch = make_batch(train_set, order, b, e);
            Graph<float> g;
            auto pred = model.forward(g, g.constant(batch.image), Mode::train, dropout_rng);
            auto loss = bce_loss(pred, batch.target);
            const double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw NumericError(fmt::format("non-finite training loss at epoch {} batch {}", epoch, batch_no + 1));
            g.backward(loss);
            sgd_momentum_step<float>(params, static_cast<float>(config.learning_rate),
                                     static_cast<float>(config.momentum));
            loss_sum += lv * static_cast<double>(e - b);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_set.size());
        const auto ev = evaluate(model, val_set, metrics::ThresholdSweep::standard(), config.binarize_threshold,
                                 static_cast<int>(batch_size));
        rec.val_loss = ev.mean_loss;
        if (hooks.val_loss_override)
            if (auto v = hooks.val_loss_override(epoch, ev.mean_loss)) rec.val_loss = *v;
        if (!std::isfinite(rec.val_loss))
            throw NumericError(fmt::format("non-finite validation loss at epoch {}", epoch));
        rec.val_map = ev.map;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        h.epochs.push_back(rec);

        if (best - rec.val_loss >= config.min_improvement) {
            best = rec.val_loss;
            h.best_epoch = epoch;
            result.best_state = model.state();
            since_best = 0;
        } else {
            ++since_best;
        }
        if (hooks.progress)
            std::cerr << fmt::format("epoch {:3d}  train_loss {:.5f}  val_loss {:.5f}  val_map {:.4f}  {:.1f}s{}\n",
                                     epoch, rec.train_loss, rec.val_loss, rec.val_map, rec.seconds,
                                     h.best_epoch == epoch ? "  *" : "");
        if (hooks.on_epoch) hooks.on_epoch(rec);
        if (since_best >= config.patience) {
            h.stop_reason = StopReason::early_stop;
            break;
        }
    }
    return result;
}

Prediction predict(arch::Model<float>& model, const data::Image8& image, double binarize_threshold) {
    if (image.h < 1 || image.w < 1 || (image.c != 1 && image.c != 3))
        throw InputError("prediction needs a non-empty gray or RGB image");
    const auto io = io_sizes(model.spec());
    const auto sample = data::make_sample("predict", image, {});
    const auto pair = data::resize_sample(sample, io.input, io.output);
    Graph<float> g;
    std::mt19937_64 unused(0);
    auto out = model.forward(g, g.constant(Tensor<float>(Shape{1, io.input, io.input, 3}, pair.image)), Mode::eval,
                             unused);
    Prediction p;
    p.h = p.w = io.output;
    p.prob = out.value().storage();
    p.labels = metrics::connected_components(p.prob, p.h, p.w, binarize_threshold);
    return p;
}

json model_metadata(const arch::NetworkSpec& spec, const TrainConfig& config) {
    return {{"format", "nseg-model"},
            {"model", arch::to_string(spec.model)},
            {"scale", spec.scale},
            {"growth_rate", spec.growth_rate},
            {"input_size", spec.input.h},
            {"input_channels", spec.input.c},
            {"output_size", spec.output.h},
            {"dropout_rate", config.dropout_rate},
            {"config", to_json(config)}};
}

void save_model(const std::filesystem::path& path, const arch::Model<float>& model, const json& metadata) {
    save_checkpoint_file(path, {model.state(), metadata.dump()});
}

LoadedModel load_model(const std::filesystem::path& path, std::optional<arch::ModelKind> expect) {
    using Kind = CheckpointError::Kind;
    auto data = load_checkpoint_file(path);
    json meta;
    arch::ArchitectureOptions opts;
    arch::ModelKind kind{};
    try {
        meta = json::parse(data.metadata);
        if (meta.value("format", "") != "nseg-model") throw CheckpointError(Kind::corrupt, "not a model checkpoint");
        kind = arch::parse_model(meta.at("model").get<std::string>());
        opts.scale = meta.at("scale").get<int>();
        opts.input_size = meta.at("input_size").get<int>();
        opts.input_channels = meta.at("input_channels").get<int>();
        opts.dropout_rate = meta.at("dropout_rate").get<double>();
        if (kind == arch::ModelKind::denseunet) opts.growth_rate = meta.at("growth_rate").get<int>();
    } catch (const json::exception& e) {
        throw CheckpointError(Kind::corrupt, path.string() + ": unreadable metadata (" + e.what() + ")");
    } catch (const ConfigError& e) {
        throw CheckpointError(Kind::corrupt, path.string() + ": " + e.what());
    }
    if (expect && *expect != kind)
        throw CheckpointError(Kind::architecture_mismatch, path.string() + " holds a " + arch::to_string(kind) +
                                                               " model, expected " + arch::to_string(*expect));
    arch::Model<float> model(arch::build_network(kind, opts), 0);
    model.load_state(data.tensors);
    return {std::move(model), std::move(meta)};
}

}  // namespace nseg::train
