#include "lbgat/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include "lbgat/error.hpp"

namespace lbgat {

namespace {

std::size_t count_hits(const Model& model, const Tensor& x, std::span<const std::size_t> y) {
    const auto predicted = argmax_rows(model.forward(x, false));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == y[i];
    return hits;
}

void check_feasible(const AdversarialBatch& adv) {
    const double eps = adv.spec.epsilon;
    for (std::size_t i = 0; i < adv.x_adv.numel(); ++i) {
        const double v = adv.x_adv[i];
        if (!(v >= 0.0 && v <= 1.0) || std::abs(v - adv.origin[i]) > eps + 1e-9) {
            throw std::logic_error("attack produced an infeasible input");
        }
    }
}

double fraction(std::size_t hits, std::size_t total) {
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

void require_non_empty(const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("evaluation needs a non-empty dataset");
}

}  // namespace

double natural_accuracy(const Model& model, const Dataset& data, std::size_t batch) {
    require_non_empty(data);
    std::size_t hits = 0;
    for (const auto& b : sequential_batches(data, batch)) hits += count_hits(model, b.x, b.y);
    return fraction(hits, data.size());
}

double robust_accuracy(const Model& model, const Dataset& data, const AttackSpec& spec,
                       std::size_t batch) {
    require_non_empty(data);
    spec.validate();
    std::size_t hits = 0;
    for (const auto& b : sequential_batches(data, batch)) {
        const auto adv = run_attack(model, b.x, b.y, spec, b.indices.front());
        check_feasible(adv);
        hits += count_hits(model, adv.x_adv, b.y);
    }
    return fraction(hits, data.size());
}

double blackbox_eval(const Model& target, const Model& source, const Dataset& data,
                     const AttackSpec& spec, std::size_t batch) {
    require_non_empty(data);
    spec.validate();
    double weighted = 0.0;
    for (const auto& b : sequential_batches(data, batch)) {
        weighted += transfer_attack(source, target, b.x, b.y, spec, b.indices.front()) *
                    static_cast<double>(b.y.size());
    }
    return weighted / static_cast<double>(data.size());
}

double blackbox_eval(const Model& target, const std::filesystem::path& source_checkpoint,
                     const Dataset& data, const AttackSpec& spec, MetricsRecord* record,
                     std::size_t batch) {
    Model source = load_checkpoint_file(source_checkpoint);
    if (source.input() != target.input() || source.classes() != target.classes()) {
        throw ConfigError("source checkpoint " + source_checkpoint.string() +
                              " is incompatible with the target model",
                          "eval.blackbox_source");
    }
    const double acc = blackbox_eval(target, source, data, spec, batch);
    if (record) {
        record->robust["blackbox"] = acc;
        record->blackbox_source = source_checkpoint.string();
    }
    return acc;
}

EvalProtocol EvalProtocol::defaults(bool image_data, std::uint64_t seed) {
    const double eps = image_data ? 0.031 : 0.1;
    const double step = image_data ? 0.003 : 0.01;
    EvalProtocol p;
    p.attacks = {
        {"pgd", {AttackFamily::pgd, eps, step, 20, true, seed}},
        {"fgsm", {AttackFamily::fgsm, eps, eps, 1, false, seed}},
        {"cw", {AttackFamily::cw_pgd, eps, step, 20, true, seed}},
    };
    return p;
}

void EvalProtocol::validate() const {
    if (batch_size == 0) throw ConfigError("must be >= 1", "eval.batch_size");
    for (std::size_t i = 0; i < attacks.size(); ++i) {
        const auto& a = attacks[i];
        const std::string field = "eval.attacks[" + std::to_string(i) + "]";
        if (a.name != "pgd" && a.name != "fgsm" && a.name != "cw") {
            throw ConfigError("name must be pgd, fgsm or cw", field + ".name");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (attacks[j].name == a.name) throw ConfigError("duplicate attack name", field + ".name");
        }
        if (a.spec.family == AttackFamily::kl_pgd) {
            throw ConfigError("kl-pgd is a training attack", field + ".family");
        }
        try {
            a.spec.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), field);
        }
    }
}

MetricsRecord evaluate(const Model& model, const Dataset& data, const EvalProtocol& protocol) {
    protocol.validate();
    MetricsRecord record;
    record.acc_natural = natural_accuracy(model, data, protocol.batch_size);
    for (const auto& a : protocol.attacks) {
        record.robust[a.name] = robust_accuracy(model, data, a.spec, protocol.batch_size);
    }
    std::optional<AttackSpec> echo;
    if (!protocol.attacks.empty()) echo = protocol.attacks.front().spec;
    if (protocol.blackbox_source) {
        // Same radius, steps and step size as the white-box PGD attack.
        AttackSpec bb = EvalProtocol::defaults(data.input.is_image()).attacks[0].spec;
        for (const auto& a : protocol.attacks) {
            if (a.name == "pgd") bb = a.spec;
        }
        bb.family = AttackFamily::pgd;
        blackbox_eval(model, *protocol.blackbox_source, data, bb, &record, protocol.batch_size);
        if (!echo) echo = bb;
    }
    if (echo) {
        record.eps = echo->epsilon;
        record.steps = echo->iterations;
        record.step_size = echo->step_size;
    }
    return record;
}

}  // namespace lbgat
