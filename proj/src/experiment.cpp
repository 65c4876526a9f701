#include "lbgat/experiment.hpp"

#include <chrono>
#include <concepts>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "lbgat/error.hpp"
#include "lbgat/rng.hpp"

namespace lbgat {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- strict reader

// Literal integers built in code are signed; parsed ones are unsigned when >= 0.
bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

class Section {
public:
    Section(const json& doc, std::string path, std::initializer_list<const char*> allowed)
        : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError("expected an object", path_.empty() ? "<root>" : path_);
        const std::set<std::string> keys(allowed.begin(), allowed.end());
        for (const auto& [key, value] : doc_.items()) {
            if (!keys.count(key)) throw ConfigError("unknown key", field(key));
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const char* key) const { return doc_.contains(key); }
    const json& at(const char* key) const { return doc_.at(key); }

    void read(const char* key, std::string& out) const {
        if (!has(key)) return;
        if (!at(key).is_string()) throw ConfigError("expected a string", field(key));
        out = at(key).get<std::string>();
    }
    void read(const char* key, std::filesystem::path& out) const {
        std::string s = out.string();
        read(key, s);
        out = s;
    }
    void read(const char* key, double& out) const {
        if (!has(key)) return;
        if (!at(key).is_number()) throw ConfigError("expected a number", field(key));
        out = at(key).get<double>();
    }
    void read(const char* key, bool& out) const {
        if (!has(key)) return;
        if (!at(key).is_boolean()) throw ConfigError("expected true or false", field(key));
        out = at(key).get<bool>();
    }
    template <std::unsigned_integral U>
        requires(!std::is_same_v<U, bool>)
    void read(const char* key, U& out) const {
        if (!has(key)) return;
        if (!non_negative_integer(at(key))) {
            throw ConfigError("expected a non-negative integer", field(key));
        }
        out = at(key).get<U>();
    }
    void read(const char* key, std::vector<std::size_t>& out) const {
        if (!has(key)) return;
        if (!at(key).is_array()) throw ConfigError("expected an array", field(key));
        out.clear();
        for (const auto& v : at(key)) {
            if (!non_negative_integer(v)) throw ConfigError("expected non-negative integers", field(key));
            out.push_back(v.get<std::size_t>());
        }
    }
    void read(const char* key, std::vector<std::filesystem::path>& out) const {
        if (!has(key)) return;
        if (!at(key).is_array()) throw ConfigError("expected an array", field(key));
        out.clear();
        for (const auto& v : at(key)) {
            if (!v.is_string()) throw ConfigError("expected strings", field(key));
            out.emplace_back(v.get<std::string>());
        }
    }

private:
    const json& doc_;
    std::string path_;
};

AttackSpec parse_attack(const json& obj, const std::string& path, AttackSpec spec,
                        bool named) {
    const Section s = named ? Section(obj, path,
                                      {"name", "family", "epsilon", "step_size", "iterations",
                                       "random_start", "seed"})
                            : Section(obj, path,
                                      {"epsilon", "step_size", "iterations", "random_start", "seed"});
    if (named && s.has("family")) {
        std::string fam;
        s.read("family", fam);
        try {
            spec.family = parse_attack_family(fam);
        } catch (const ConfigError&) {
            throw ConfigError("unknown attack family '" + fam + "'", s.field("family"));
        }
    }
    s.read("epsilon", spec.epsilon);
    s.read("step_size", spec.step_size);
    s.read("iterations", spec.iterations);
    s.read("random_start", spec.random_start);
    s.read("seed", spec.seed);
    return spec;
}

json attack_json(const AttackSpec& a) {
    return {{"epsilon", a.epsilon},
            {"step_size", a.step_size},
            {"iterations", a.iterations},
            {"random_start", a.random_start},
            {"seed", a.seed}};
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

void require_file(const std::filesystem::path& p, const std::string& field) {
    if (p.empty()) throw ConfigError("path required", field);
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) {
        throw ConfigError("file not found: " + p.string(), field);
    }
}

void write_jsonl(const json& entry, const std::filesystem::path& path, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << entry.dump() << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

json record_json(const MetricsRecord& r) {
    json j = {{"run_id", r.run_id},
              {"epoch", r.epoch ? json(*r.epoch) : json("final")},
              {"objective", r.objective},
              {"alpha", r.alpha},
              {"beta", r.beta},
              {"seed", r.seed},
              {"acc_natural", r.acc_natural},
              {"robust", r.robust},
              {"losses", r.losses},
              {"eps", r.eps},
              {"steps", r.steps},
              {"step_size", r.step_size},
              {"seconds", r.seconds}};
    if (!r.blackbox_source.empty()) j["blackbox_source"] = r.blackbox_source;
    return j;
}

void stamp(MetricsRecord& r, const ExperimentConfig& c) {
    r.run_id = c.run_id();
    r.objective = std::string(objective_name(c.train.objective.kind));
    r.alpha = c.train.objective.alpha;
    r.beta = c.train.objective.beta;
    r.seed = c.train.seed;
}

Model load_compatible(const std::filesystem::path& path, const ExperimentConfig& config,
                      const Dataset& data, const char* field) {
    if (!std::filesystem::is_regular_file(path)) throw IoError("checkpoint not found: " + path.string());
    Model m = load_checkpoint_file(path);
    if (m.input() != data.input || m.classes() != data.classes) {
        throw ConfigError("checkpoint " + path.string() + " (" + std::string(arch_tag(m.arch())) +
                              ", input " + m.input().str() + ", " + std::to_string(m.classes()) +
                              " classes) is incompatible with the dataset (input " +
                              data.input.str() + ", " + std::to_string(data.classes) + " classes)",
                          field);
    }
    (void)config;
    return m;
}

const AttackSpec& pgd_spec(const ExperimentConfig& c, AttackSpec& fallback, bool image) {
    for (const auto& a : c.eval.attacks) {
        if (a.name == "pgd") return a.spec;
    }
    fallback = EvalProtocol::defaults(image).attacks[0].spec;
    return fallback;
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig c;
    const Section root(doc, "", {"dataset", "model", "objective", "train", "eval", "output"});

    if (root.has("dataset")) {
        const Section s(root.at("dataset"), "dataset",
                        {"kind", "train_size", "test_size", "noise", "seed", "train_images",
                         "train_labels", "test_images", "test_labels", "train_csv", "test_csv",
                         "augmentation"});
        auto& d = c.dataset;
        s.read("kind", d.kind);
        s.read("train_size", d.train_size);
        s.read("test_size", d.test_size);
        s.read("noise", d.noise);
        s.read("seed", d.seed);
        s.read("train_images", d.train_images);
        s.read("train_labels", d.train_labels);
        s.read("test_images", d.test_images);
        s.read("test_labels", d.test_labels);
        s.read("train_csv", d.train_csv);
        s.read("test_csv", d.test_csv);
        if (s.has("augmentation")) {
            const Section a(s.at("augmentation"), "dataset.augmentation", {"padding", "flip", "seed"});
            a.read("padding", d.augmentation.padding);
            a.read("flip", d.augmentation.horizontal_flip);
            a.read("seed", d.augmentation.seed);
        }
    }

    if (root.has("model")) {
        const Section s(root.at("model"), "model",
                        {"arch", "hidden", "seed", "teacher_checkpoints", "teacher_epochs"});
        std::string arch = std::string(arch_tag(c.model.arch));
        s.read("arch", arch);
        try {
            c.model.arch = parse_arch(arch);
        } catch (const ConfigError&) {
            throw ConfigError("unknown architecture tag '" + arch + "'", "model.arch");
        }
        s.read("hidden", c.model.hidden);
        s.read("seed", c.model.seed);
        s.read("teacher_checkpoints", c.model.teacher_checkpoints);
        s.read("teacher_epochs", c.model.teacher_epochs);
    }

    if (root.has("objective")) {
        const Section s(root.at("objective"), "objective",
                        {"kind", "alpha", "beta", "robust_ce", "attack"});
        auto& o = c.train.objective;
        std::string kind = std::string(objective_name(o.kind));
        s.read("kind", kind);
        o.kind = parse_objective(kind);
        s.read("alpha", o.alpha);
        s.read("beta", o.beta);
        s.read("robust_ce", o.robust_ce);
        if (s.has("attack")) o.inner_attack = parse_attack(s.at("attack"), "objective.attack", o.inner_attack, false);
    }

    if (root.has("train")) {
        const Section s(root.at("train"), "train",
                        {"epochs", "batch_size", "lr", "momentum", "weight_decay",
                         "transition_epochs", "decay_factor", "seed"});
        auto& t = c.train;
        s.read("epochs", t.epochs);
        s.read("batch_size", t.batch_size);
        s.read("lr", t.base_lr);
        s.read("momentum", t.momentum);
        s.read("weight_decay", t.weight_decay);
        s.read("transition_epochs", t.transition_epochs);
        s.read("decay_factor", t.decay_factor);
        s.read("seed", t.seed);
    }

    const bool image = c.dataset.kind == "idx";
    c.eval = EvalProtocol::defaults(image);
    if (root.has("eval")) {
        const Section s(root.at("eval"), "eval", {"attacks", "blackbox_source", "batch_size"});
        if (s.has("attacks")) {
            const auto& list = s.at("attacks");
            if (!list.is_array()) throw ConfigError("expected an array", "eval.attacks");
            c.eval.attacks.clear();
            for (std::size_t i = 0; i < list.size(); ++i) {
                const std::string path = "eval.attacks[" + std::to_string(i) + "]";
                NamedAttack a;
                Section(list[i], path,
                        {"name", "family", "epsilon", "step_size", "iterations", "random_start",
                         "seed"})
                    .read("name", a.name);
                if (a.name.empty()) throw ConfigError("attack name required", path + ".name");
                const AttackFamily implied = a.name == "fgsm" ? AttackFamily::fgsm
                                             : a.name == "cw" ? AttackFamily::cw_pgd
                                                              : AttackFamily::pgd;
                const auto base = EvalProtocol::defaults(image).attacks[0].spec;
                AttackSpec start{implied, base.epsilon, base.step_size,
                                 implied == AttackFamily::fgsm ? 1u : base.iterations,
                                 implied != AttackFamily::fgsm, 0};
                a.spec = parse_attack(list[i], path, start, true);
                c.eval.attacks.push_back(std::move(a));
            }
        }
        std::string source;
        s.read("blackbox_source", source);
        if (!source.empty()) c.eval.blackbox_source = source;
        s.read("batch_size", c.eval.batch_size);
    }

    if (root.has("output")) {
        const Section s(root.at("output"), "output",
                        {"dir", "wall_clock", "checkpoint_every", "eval_each_epoch"});
        s.read("dir", c.output.dir);
        s.read("wall_clock", c.output.wall_clock);
        s.read("checkpoint_every", c.output.checkpoint_every);
        s.read("eval_each_epoch", c.output.eval_each_epoch);
    }
    c.train.augmentation = c.dataset.augmentation;
    c.train.record_wall_clock = c.output.wall_clock;
    c.train.run_id = c.run_id();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    const auto& d = c.dataset;
    const auto& o = c.train.objective;
    json attacks = json::array();
    for (const auto& a : c.eval.attacks) {
        json j = attack_json(a.spec);
        j["name"] = a.name;
        j["family"] = std::string(attack_family_name(a.spec.family));
        attacks.push_back(std::move(j));
    }
    json teachers = json::array();
    for (const auto& p : c.model.teacher_checkpoints) teachers.push_back(p.string());
    json doc = {
        {"dataset",
         {{"kind", d.kind},
          {"train_size", d.train_size},
          {"test_size", d.test_size},
          {"noise", d.noise},
          {"seed", d.seed},
          {"train_images", d.train_images.string()},
          {"train_labels", d.train_labels.string()},
          {"test_images", d.test_images.string()},
          {"test_labels", d.test_labels.string()},
          {"train_csv", d.train_csv.string()},
          {"test_csv", d.test_csv.string()},
          {"augmentation",
           {{"padding", d.augmentation.padding},
            {"flip", d.augmentation.horizontal_flip},
            {"seed", d.augmentation.seed}}}}},
        {"model",
         {{"arch", std::string(arch_tag(c.model.arch))},
          {"hidden", c.model.hidden},
          {"seed", c.model.seed},
          {"teacher_checkpoints", teachers},
          {"teacher_epochs", c.model.teacher_epochs}}},
        {"objective",
         {{"kind", std::string(objective_name(o.kind))},
          {"alpha", o.alpha},
          {"beta", o.beta},
          {"robust_ce", o.robust_ce},
          {"attack", attack_json(o.inner_attack)}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.base_lr},
          {"momentum", c.train.momentum},
          {"weight_decay", c.train.weight_decay},
          {"transition_epochs", c.train.transition_epochs},
          {"decay_factor", c.train.decay_factor},
          {"seed", c.train.seed}}},
        {"eval",
         {{"attacks", attacks},
          {"blackbox_source", c.eval.blackbox_source ? c.eval.blackbox_source->string() : ""},
          {"batch_size", c.eval.batch_size}}},
        {"output",
         {{"dir", c.output.dir.string()},
          {"wall_clock", c.output.wall_clock},
          {"checkpoint_every", c.output.checkpoint_every},
          {"eval_each_epoch", c.output.eval_each_epoch}}},
    };
    return doc;
}

void ExperimentConfig::validate() const {
    const auto& d = dataset;
    if (d.kind == "moons" || d.kind == "gaussians") {
        if (d.train_size < 2) throw ConfigError("must be >= 2", "dataset.train_size");
        if (d.test_size < 2) throw ConfigError("must be >= 2", "dataset.test_size");
        if (!(d.noise >= 0.0)) throw ConfigError("must be >= 0", "dataset.noise");
    } else if (d.kind == "idx") {
        require_file(d.train_images, "dataset.train_images");
        require_file(d.train_labels, "dataset.train_labels");
        require_file(d.test_images, "dataset.test_images");
        require_file(d.test_labels, "dataset.test_labels");
    } else if (d.kind == "csv") {
        require_file(d.train_csv, "dataset.train_csv");
        require_file(d.test_csv, "dataset.test_csv");
    } else {
        throw ConfigError("unknown dataset kind '" + d.kind + "'", "dataset.kind");
    }
    if (d.augmentation.active() && d.kind != "idx") {
        throw ConfigError("augmentation needs image data", "dataset.augmentation");
    }
    if (model.arch == Arch::mlp && model.hidden == 0) throw ConfigError("must be >= 1", "model.hidden");
    if (model.arch == Arch::small_conv && d.kind != "idx") {
        throw ConfigError("small-conv needs image data", "model.arch");
    }
    const auto kind = train.objective.kind;
    if (!model.teacher_checkpoints.empty()) {
        if (!requires_teacher(kind)) {
            throw ConfigError("objective takes no teacher", "model.teacher_checkpoints");
        }
        if (trains_teacher(kind) && model.teacher_checkpoints.size() != 1) {
            throw ConfigError("a co-trained teacher must be a single checkpoint",
                              "model.teacher_checkpoints");
        }
        for (std::size_t i = 0; i < model.teacher_checkpoints.size(); ++i) {
            require_file(model.teacher_checkpoints[i],
                         "model.teacher_checkpoints[" + std::to_string(i) + "]");
        }
    }
    train.validate();
    eval.validate();
    if (eval.blackbox_source) require_file(*eval.blackbox_source, "eval.blackbox_source");
}

std::string ExperimentConfig::run_id() const {
    json doc = config_to_json(*this);
    doc.erase("output");
    const std::string text = doc.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) h = (h ^ ch) * 0x100000001b3ULL;
    return std::string(objective_name(train.objective.kind)) + "-" + hex64(h).substr(0, 12);
}

std::filesystem::path ExperimentConfig::output_dir() const {
    const char* root = std::getenv(kOutputRootEnv);
    if (root && *root && output.dir.is_relative()) return std::filesystem::path(root) / output.dir;
    return output.dir;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like section.key=value", assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("empty path segment", path);
        if (!node->is_object()) {
            if (!node->is_null()) throw ConfigError("cannot descend into a non-object", path);
            *node = json::object();
        }
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what(), path.string());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    auto config = parse_config(doc);
    config.validate();
    return config;
}

std::pair<Dataset, Dataset> load_datasets(const DatasetSection& d) {
    if (d.kind == "moons") {
        return {make_moons(d.train_size, d.noise, d.seed, Split::train),
                make_moons(d.test_size, d.noise, mix_seed(d.seed, 1), Split::test)};
    }
    if (d.kind == "gaussians") {
        return {make_gaussians(d.train_size, d.noise, d.seed, Split::train),
                make_gaussians(d.test_size, d.noise, mix_seed(d.seed, 1), Split::test)};
    }
    if (d.kind == "idx") {
        auto train = load_idx(d.train_images, d.train_labels, Split::train);
        auto test = load_idx(d.test_images, d.test_labels, Split::test);
        if (train.input != test.input) throw FormatError("IDX train and test image sizes differ");
        const auto classes = std::max(train.classes, test.classes);
        train.classes = test.classes = classes;
        return {std::move(train), std::move(test)};
    }
    if (d.kind == "csv") {
        auto train = read_csv(d.train_csv, Split::train);
        auto test = read_csv(d.test_csv, Split::test);
        const auto classes = std::max(train.classes, test.classes);
        train.classes = test.classes = classes;
        return {std::move(train), std::move(test)};
    }
    throw ConfigError("unknown dataset kind '" + d.kind + "'", "dataset.kind");
}

// ---------------------------------------------------------------- commands

TrainArtifacts run_train(const ExperimentConfig& config) {
    config.validate();
    const auto dir = config.output_dir();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    auto [train_set, test_set] = load_datasets(config.dataset);
    const auto& m = config.model;
    const auto kind = config.train.objective.kind;
    Model robust = build_model(m.arch, train_set.input, train_set.classes, m.seed, m.hidden);

    TrainArtifacts artifacts;
    std::vector<Model> teacher;
    bool write_teacher = false;
    if (requires_teacher(kind)) {
        if (!m.teacher_checkpoints.empty()) {
            for (std::size_t i = 0; i < m.teacher_checkpoints.size(); ++i) {
                teacher.push_back(load_compatible(m.teacher_checkpoints[i], config, train_set,
                                                  "model.teacher_checkpoints"));
            }
            write_teacher = trains_teacher(kind);
        } else {
            teacher.push_back(build_model(m.arch, train_set.input, train_set.classes,
                                          mix_seed(m.seed, 1), m.hidden));
            write_teacher = true;
            if (!trains_teacher(kind)) {
                // Off-line natural pre-training of the frozen teacher.
                TrainConfig pre = config.train;
                pre.objective.kind = ObjectiveKind::natural;
                pre.objective.robust_ce = false;
                pre.epochs = m.teacher_epochs ? m.teacher_epochs : config.train.epochs;
                std::erase_if(pre.transition_epochs, [&](std::size_t t) { return t >= pre.epochs; });
                pre.seed = mix_seed(config.train.seed, 1);
                pre.run_id = config.run_id() + "-teacher";
                std::vector<Model> none;
                train(teacher.front(), none, train_set, pre);
            }
        }
    }

    TrainHooks hooks;
    hooks.on_epoch_end = [&](std::size_t epoch, const Model& r, std::span<const Model> t,
                             MetricsRecord& record) {
        if (config.output.eval_each_epoch) {
            auto eval = evaluate(r, test_set, config.eval);
            record.acc_natural = eval.acc_natural;
            record.robust = eval.robust;
            record.blackbox_source = eval.blackbox_source;
        }
        const auto every = config.output.checkpoint_every;
        if (every > 0 && (epoch + 1) % every == 0) {
            const auto tag = "epoch" + std::to_string(epoch + 1);
            save_checkpoint_file(r, dir / ("robust_" + tag + ".ckpt"));
            if (trains_teacher(kind)) save_checkpoint_file(t.front(), dir / ("teacher_" + tag + ".ckpt"));
        }
    };

    const auto started = std::chrono::steady_clock::now();
    auto result = train(robust, teacher, train_set, config.train, hooks);

    MetricsRecord final_row = evaluate(robust, test_set, config.eval);
    stamp(final_row, config);
    if (config.output.wall_clock) {
        final_row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }

    artifacts.robust_checkpoint = dir / "robust.ckpt";
    save_checkpoint_file(robust, artifacts.robust_checkpoint);
    if (write_teacher) {
        artifacts.teacher_checkpoint = dir / "teacher.ckpt";
        save_checkpoint_file(teacher.front(), artifacts.teacher_checkpoint);
    }

    artifacts.records = std::move(result.epochs);
    artifacts.records.push_back(final_row);
    write_metrics_csv(artifacts.records, dir / "metrics.csv");

    json epochs = json::array();
    for (const auto& r : artifacts.records) epochs.push_back(record_json(r));
    json entry = {{"run_id", config.run_id()},
                  {"command", "train"},
                  {"config", config_to_json(config)},
                  {"records", epochs},
                  {"notes",
                   {{"augment_then_attack", true},
                    {"model_selection", "final epoch"},
                    {"teacher_combination", "mean of logits"}}}};
    write_jsonl(entry, dir / "runs.jsonl", false);
    return artifacts;
}

MetricsRecord run_eval(const std::filesystem::path& checkpoint, const ExperimentConfig& config) {
    config.validate();
    const auto dir = config.output_dir();
    std::filesystem::create_directories(dir);
    auto [train_set, test_set] = load_datasets(config.dataset);
    (void)train_set;
    const Model model = load_compatible(checkpoint, config, test_set, "checkpoint");
    auto record = evaluate(model, test_set, config.eval);
    stamp(record, config);
    append_metrics_csv(std::span(&record, 1), dir / "metrics.csv");
    write_jsonl({{"run_id", record.run_id},
                 {"command", "eval"},
                 {"checkpoint", checkpoint.string()},
                 {"config", config_to_json(config)},
                 {"records", json::array({record_json(record)})}},
                dir / "runs.jsonl", true);
    return record;
}

MetricsRecord run_transfer(const std::filesystem::path& source, const std::filesystem::path& target,
                           const ExperimentConfig& config) {
    config.validate();
    const auto dir = config.output_dir();
    std::filesystem::create_directories(dir);
    auto [train_set, test_set] = load_datasets(config.dataset);
    (void)train_set;
    const Model target_model = load_compatible(target, config, test_set, "target");
    (void)load_compatible(source, config, test_set, "source");
    AttackSpec fallback;
    const AttackSpec& spec = pgd_spec(config, fallback, test_set.input.is_image());

    MetricsRecord record;
    record.acc_natural = natural_accuracy(target_model, test_set, config.eval.batch_size);
    blackbox_eval(target_model, source, test_set, spec, &record, config.eval.batch_size);
    record.eps = spec.epsilon;
    record.steps = spec.iterations;
    record.step_size = spec.step_size;
    stamp(record, config);
    append_metrics_csv(std::span(&record, 1), dir / "metrics.csv");
    write_jsonl({{"run_id", record.run_id},
                 {"command", "transfer"},
                 {"source", source.string()},
                 {"target", target.string()},
                 {"config", config_to_json(config)},
                 {"records", json::array({record_json(record)})}},
                dir / "runs.jsonl", true);
    return record;
}

std::vector<PlotPoint> run_report(const std::filesystem::path& run_dir, std::ostream& out) {
    const auto records = read_metrics_csv(run_dir / "metrics.csv");
    const auto finals = final_records(records);
    const auto points = plot_points(finals);
    write_plotdata(points, run_dir / "plotdata.csv");

    out << std::left << std::setw(24) << "run_id" << std::setw(14) << "method" << std::right
        << std::setw(10) << "acc_nat" << std::setw(10) << "acc_pgd" << std::setw(10) << "acc_fgsm"
        << std::setw(10) << "acc_cw" << std::setw(10) << "acc_bb" << '\n';
    auto cell = [&](const MetricsRecord& r, const char* key) {
        auto it = r.robust.find(key);
        out << std::setw(10);
        if (it == r.robust.end()) {
            out << "-";
        } else {
            out << std::fixed << std::setprecision(4) << it->second;
        }
    };
    for (const auto& r : finals) {
        out << std::left << std::setw(24) << r.run_id << std::setw(14) << r.objective << std::right
            << std::setw(10) << std::fixed << std::setprecision(4) << r.acc_natural;
        for (const char* key : kRobustColumns) cell(r, key);
        out << '\n';
    }
    return points;
}

}  // namespace lbgat
