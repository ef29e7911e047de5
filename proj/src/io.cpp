#include "semfit/io.hpp"

#include <fstream>
#include <map>
#include <set>

namespace semfit {

namespace {

using nlohmann::json;

std::map<std::string, int> index_names(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
        throw InputError(std::string("model: '") + key + "' must be a list of names");
    }
    std::map<std::string, int> out;
    int i = 0;
    for (const auto& name : doc.at(key)) {
        if (!name.is_string()) {
            throw InputError(std::string("model: '") + key + "' entries must be strings");
        }
        if (!out.emplace(name.get<std::string>(), i++).second) {
            throw InputError(std::string("model: duplicate name '") + name.get<std::string>() + "' in '" + key + "'");
        }
    }
    return out;
}

int lookup(const std::map<std::string, int>& names, const json& value, const std::string& where) {
    if (!value.is_string()) {
        throw InputError("model: " + where + " must name a variable or factor");
    }
    const auto it = names.find(value.get<std::string>());
    if (it == names.end()) {
        throw InputError("model: " + where + " refers to unknown name '" + value.get<std::string>() + "'");
    }
    return it->second;
}

class EntryReader {
public:
    ParamEntry read(const json& item, const std::string& where) {
        if (!item.is_object()) {
            throw InputError("model: " + where + " must be an object");
        }
        for (const auto& [k, v] : item.items()) {
            if (k != "var" && k != "factor" && k != "pair" && k != "value" && k != "start") {
                throw InputError("model: " + where + " has unknown key '" + k + "'");
            }
        }
        if (item.contains("value")) {
            if (!item.at("value").is_number()) {
                throw InputError("model: " + where + ".value must be a number");
            }
            return FixedValue{item.at("value").get<double>()};
        }
        std::optional<double> start;
        if (item.contains("start")) {
            if (!item.at("start").is_number()) {
                throw InputError("model: " + where + ".start must be a number");
            }
            start = item.at("start").get<double>();
        }
        return FreeParam{next_++, start};
    }

    int next_free() { return next_++; }

private:
    int next_ = 0;
};

std::pair<int, int> read_pair(const json& item, const std::map<std::string, int>& names, const std::string& where) {
    if (!item.contains("pair") || !item.at("pair").is_array() || item.at("pair").size() != 2) {
        throw InputError("model: " + where + ".pair must be a two-element list");
    }
    return {lookup(names, item.at("pair")[0], where + ".pair[0]"), lookup(names, item.at("pair")[1], where + ".pair[1]")};
}

const json& optional_list(const json& doc, const char* key) {
    static const json empty = json::array();
    if (!doc.contains(key)) {
        return empty;
    }
    if (!doc.at(key).is_array()) {
        throw InputError(std::string("model: '") + key + "' must be a list");
    }
    return doc.at(key);
}

json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw InputError(std::string("cannot open ") + what + " file '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(std::string(what) + " file '" + path.string() + "': " + e.what());
    }
}

json entry_json(const ParamEntry& e) {
    json out = json::object();
    if (const auto* f = std::get_if<FixedValue>(&e)) {
        out["value"] = f->value;
    } else if (const auto& s = std::get<FreeParam>(e).start) {
        out["start"] = *s;
    }
    return out;
}

}  // namespace

CfaModel model_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw InputError("model: document must be a JSON object");
    }
    for (const auto& [k, v] : doc.items()) {
        if (k != "observed" && k != "factors" && k != "loadings" && k != "factor_cov" && k != "unique_cov") {
            throw InputError("model: unknown key '" + k + "'");
        }
    }
    const auto observed = index_names(doc, "observed");
    const auto factors = doc.contains("factors") ? index_names(doc, "factors") : std::map<std::string, int>{};
    const int p = static_cast<int>(observed.size());
    const int m = static_cast<int>(factors.size());
    if (p == 0) {
        throw InputError("model: 'observed' is empty");
    }

    PatternGrid lambda(p, m, false);
    PatternGrid phi(m, m, true, FixedValue{0.0});
    PatternGrid psi(p, p, true, FixedValue{0.0});
    for (int j = 0; j < m; ++j) {
        phi.at(j, j) = FixedValue{1.0};
    }
    EntryReader reader;

    std::set<std::pair<int, int>> seen;
    const auto& loadings = optional_list(doc, "loadings");
    for (std::size_t k = 0; k < loadings.size(); ++k) {
        const auto where = "loadings[" + std::to_string(k) + "]";
        const auto& item = loadings[k];
        if (!item.is_object() || !item.contains("var") || !item.contains("factor")) {
            throw InputError("model: " + where + " needs 'var' and 'factor'");
        }
        const int i = lookup(observed, item.at("var"), where + ".var");
        const int j = lookup(factors, item.at("factor"), where + ".factor");
        if (!seen.emplace(i, j).second) {
            throw InputError("model: " + where + " repeats a loading");
        }
        lambda.at(i, j) = reader.read(item, where);
    }

    seen.clear();
    const auto& fcov = optional_list(doc, "factor_cov");
    for (std::size_t k = 0; k < fcov.size(); ++k) {
        const auto where = "factor_cov[" + std::to_string(k) + "]";
        auto [a, b] = read_pair(fcov[k], factors, where);
        if (!seen.emplace(std::max(a, b), std::min(a, b)).second) {
            throw InputError("model: " + where + " repeats a factor pair");
        }
        phi.at(a, b) = reader.read(fcov[k], where);
    }

    seen.clear();
    std::vector<bool> listed_variance(static_cast<std::size_t>(p), false);
    const auto& ucov = optional_list(doc, "unique_cov");
    for (std::size_t k = 0; k < ucov.size(); ++k) {
        const auto where = "unique_cov[" + std::to_string(k) + "]";
        auto [a, b] = read_pair(ucov[k], observed, where);
        if (!seen.emplace(std::max(a, b), std::min(a, b)).second) {
            throw InputError("model: " + where + " repeats a variable pair");
        }
        psi.at(a, b) = reader.read(ucov[k], where);
        if (a == b) {
            listed_variance[static_cast<std::size_t>(a)] = true;
        }
    }
    for (int i = 0; i < p; ++i) {
        if (!listed_variance[static_cast<std::size_t>(i)]) {
            psi.at(i, i) = FreeParam{reader.next_free(), std::nullopt};
        }
    }

    std::vector<std::string> observed_names(static_cast<std::size_t>(p));
    for (const auto& [name, i] : observed) {
        observed_names[static_cast<std::size_t>(i)] = name;
    }
    std::vector<std::string> factor_names(static_cast<std::size_t>(m));
    for (const auto& [name, j] : factors) {
        factor_names[static_cast<std::size_t>(j)] = name;
    }
    try {
        return CfaModel(std::move(lambda), std::move(phi), std::move(psi), std::move(observed_names),
                        std::move(factor_names));
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("model: ") + e.what());
    }
}

CfaModel load_model(const std::filesystem::path& path) {
    const auto doc = read_json_file(path, "model");
    try {
        return model_from_json(doc);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

json model_to_json(const CfaModel& model) {
    json doc;
    doc["observed"] = model.observed_names();
    doc["factors"] = model.factor_names();
    doc["loadings"] = json::array();
    doc["factor_cov"] = json::array();
    doc["unique_cov"] = json::array();
    const auto& obs = model.observed_names();
    const auto& fac = model.factor_names();
    // Free entries keep their relative index order within each matrix.
    auto add = [&](const PatternPosition& pos) {
        json item = entry_json(model.entry(pos));
        const auto r = static_cast<std::size_t>(pos.row);
        const auto c = static_cast<std::size_t>(pos.col);
        switch (pos.matrix) {
            case MatrixKind::Lambda:
                item["var"] = obs[r];
                item["factor"] = fac[c];
                doc["loadings"].push_back(item);
                break;
            case MatrixKind::Phi:
                item["pair"] = {fac[r], fac[c]};
                doc["factor_cov"].push_back(item);
                break;
            case MatrixKind::Psi:
                item["pair"] = {obs[r], obs[c]};
                doc["unique_cov"].push_back(item);
                break;
        }
    };
    const auto& free = model.free_positions();
    std::vector<PatternPosition> ordered(free.begin(), free.end());
    std::stable_partition(ordered.begin(), ordered.end(),
                          [](const PatternPosition& p) { return p.matrix == MatrixKind::Lambda; });
    std::stable_partition(ordered.begin(), ordered.end(),
                          [](const PatternPosition& p) { return p.matrix != MatrixKind::Psi; });
    for (const auto& pos : ordered) {
        add(pos);
    }
    for (int j = 0; j < model.m(); ++j) {
        for (int i = 0; i < model.p(); ++i) {
            const auto& e = model.lambda_pattern().at(i, j);
            if (!is_free(e) && std::get<FixedValue>(e).value != 0.0) {
                add(PatternPosition::make(MatrixKind::Lambda, i, j));
            }
        }
    }
    for (int j = 0; j < model.m(); ++j) {
        for (int k = j; k < model.m(); ++k) {
            const auto& e = model.phi_pattern().at(k, j);
            if (!is_free(e) && std::get<FixedValue>(e).value != (j == k ? 1.0 : 0.0)) {
                add(PatternPosition::make(MatrixKind::Phi, k, j));
            }
        }
    }
    for (int j = 0; j < model.p(); ++j) {
        for (int i = j; i < model.p(); ++i) {
            const auto& e = model.psi_pattern().at(i, j);
            if (!is_free(e) && (i == j || std::get<FixedValue>(e).value != 0.0)) {
                add(PatternPosition::make(MatrixKind::Psi, i, j));
            }
        }
    }
    return doc;
}

SimulationPlan plan_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw InputError("plan: document must be a JSON object");
    }
    for (const auto& [k, v] : doc.items()) {
        if (k != "scenario" && k != "sample_sizes" && k != "replications" && k != "seed" && k != "estimators" &&
            k != "lm_enabled") {
            throw InputError("plan: unknown key '" + k + "'");
        }
    }
    if (!doc.contains("scenario") || !doc.at("scenario").is_string()) {
        throw InputError("plan: 'scenario' is required");
    }
    try {
        auto plan = SimulationPlan::defaults(parse_scenario(doc.at("scenario").get<std::string>()));
        if (doc.contains("sample_sizes")) {
            plan.sample_sizes = doc.at("sample_sizes").get<std::vector<int>>();
        }
        if (doc.contains("replications")) {
            plan.replications = doc.at("replications").get<int>();
        }
        if (doc.contains("seed")) {
            plan.master_seed = doc.at("seed").get<std::uint64_t>();
        }
        if (doc.contains("estimators")) {
            plan.estimators.clear();
            for (const auto& e : doc.at("estimators")) {
                plan.estimators.push_back(parse_estimator(e.get<std::string>()));
            }
        }
        if (doc.contains("lm_enabled")) {
            plan.lm_enabled = doc.at("lm_enabled").get<bool>();
        }
        plan.validate();
        return plan;
    } catch (const json::exception& e) {
        throw InputError(std::string("plan: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("plan: ") + e.what());
    }
}

SimulationPlan load_plan(const std::filesystem::path& path) {
    const auto doc = read_json_file(path, "plan");
    try {
        return plan_from_json(doc);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace semfit
