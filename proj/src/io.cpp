#include "habitopt/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "habitopt/error.hpp"

namespace habitopt {

Json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidInput, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::InvalidInput, path.string() + ": " + e.what());
    }
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error(ErrorKind::InvalidInput, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string format_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

template <typename T>
T get(const Json& j, const char* key) {
    if (!j.contains(key)) throw Error(ErrorKind::InvalidInput, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::InvalidInput, std::string("field '") + key + "': " + e.what());
    }
}

RandomVariable rv_from_json(const EventTree& tree, int level, const Json& j) {
    std::vector<double> v;
    if (j.is_number()) {
        v.assign(static_cast<std::size_t>(tree.atom_count(level)), j.get<double>());
    } else {
        v = j.get<std::vector<double>>();
    }
    if (static_cast<int>(v.size()) != tree.atom_count(level)) {
        throw Error(ErrorKind::LevelMismatch, "level " + std::to_string(level) + " expects " +
                                                  std::to_string(tree.atom_count(level)) + " values, got " +
                                                  std::to_string(v.size()));
    }
    return RandomVariable(tree, level, std::move(v));
}

}  // namespace

Json tree_to_json(const EventTree& tree) {
    const auto d = tree.describe();
    return Json{{"T", d.horizon}, {"levels", d.levels}, {"probs", d.probs}};
}

EventTree tree_from_json(const Json& j) {
    TreeDescription d;
    d.horizon = get<int>(j, "T");
    d.levels = get<std::vector<std::vector<std::vector<int>>>>(j, "levels");
    d.probs = get<std::vector<double>>(j, "probs");
    return EventTree::build(d);
}

Json process_to_json(const AdaptedProcess& p, int first) {
    Json out = Json::array();
    for (int k = first; k <= p.horizon(); ++k) {
        out.push_back(std::vector<double>(p[k].values().begin(), p[k].values().end()));
    }
    return out;
}

AdaptedProcess process_from_json(const EventTree& tree, const Json& j, int first, double fill) {
    const int T = tree.horizon();
    if (!j.is_array() || static_cast<int>(j.size()) != T + 1 - first) {
        throw Error(ErrorKind::LevelMismatch, "expected " + std::to_string(T + 1 - first) + " per-level arrays");
    }
    std::vector<RandomVariable> comps;
    for (int k = 0; k < first; ++k) comps.push_back(RandomVariable::constant(tree, k, fill));
    for (int k = first; k <= T; ++k) comps.push_back(rv_from_json(tree, k, j[static_cast<std::size_t>(k - first)]));
    return AdaptedProcess(std::move(comps));
}

Json market_to_json(const MarketModel& model) {
    const EventTree& tree = model.tree();
    const int T = tree.horizon();
    Json j;
    j["tree"] = tree_to_json(tree);
    j["assets"] = model.assets();
    Json prices = Json::array();
    for (int k = 0; k < T; ++k) {
        Json level = Json::array();
        for (int a = 0; a < tree.atom_count(k); ++a) {
            std::vector<double> row;
            for (int i = 1; i <= model.assets(); ++i) row.push_back(model.price(i, k, a));
            level.push_back(row);
        }
        prices.push_back(level);
    }
    Json divs = Json::array();
    for (int k = 1; k <= T; ++k) {
        Json level = Json::array();
        for (int a = 0; a < tree.atom_count(k); ++a) {
            std::vector<double> row;
            for (int i = 1; i <= model.assets(); ++i) row.push_back(model.dividend(i, k, a));
            level.push_back(row);
        }
        divs.push_back(level);
    }
    j["prices"] = prices;
    j["dividends"] = divs;
    Json rates = Json::array();
    for (int k = 1; k <= T; ++k) {
        const auto& r = model.rate(k);
        rates.push_back(std::vector<double>(r.values().begin(), r.values().end()));
    }
    j["rates"] = rates;
    if (model.data().sub_filtration) j["filtration_F"] = *model.data().sub_filtration;
    return j;
}

MarketModel market_from_json(const Json& j) {
    const EventTree tree = tree_from_json(j.contains("tree") ? j.at("tree") : j);
    const int T = tree.horizon();
    MarketData data;
    data.tree = tree;
    data.assets = j.value("assets", 0);
    const Json prices = j.value("prices", Json::array());
    const Json divs = j.value("dividends", Json::array());
    if (data.assets > 0 && (static_cast<int>(prices.size()) != T || static_cast<int>(divs.size()) != T)) {
        throw Error(ErrorKind::LevelMismatch, "prices need levels 0..T-1 and dividends levels 1..T");
    }
    for (int i = 0; i < data.assets; ++i) {
        auto price = AdaptedProcess::zeros(tree);
        auto div = AdaptedProcess::zeros(tree);
        for (int k = 0; k < T; ++k) {
            const auto& level = prices[static_cast<std::size_t>(k)];
            if (static_cast<int>(level.size()) != tree.atom_count(k)) {
                throw Error(ErrorKind::LevelMismatch, "prices at level " + std::to_string(k) + " have the wrong atom count");
            }
            for (int a = 0; a < tree.atom_count(k); ++a) price[k][static_cast<std::size_t>(a)] = level[static_cast<std::size_t>(a)].at(static_cast<std::size_t>(i)).get<double>();
        }
        for (int k = 1; k <= T; ++k) {
            const auto& level = divs[static_cast<std::size_t>(k - 1)];
            if (static_cast<int>(level.size()) != tree.atom_count(k)) {
                throw Error(ErrorKind::LevelMismatch, "dividends at level " + std::to_string(k) + " have the wrong atom count");
            }
            for (int a = 0; a < tree.atom_count(k); ++a) div[k][static_cast<std::size_t>(a)] = level[static_cast<std::size_t>(a)].at(static_cast<std::size_t>(i)).get<double>();
        }
        data.prices.push_back(std::move(price));
        data.dividends.push_back(std::move(div));
    }
    const Json rates = get<Json>(j, "rates");
    if (!rates.is_array() || static_cast<int>(rates.size()) != T) {
        throw Error(ErrorKind::LevelMismatch, "rates need one array per level 1..T");
    }
    data.rates.push_back(RandomVariable::constant(tree, 0, 0.0));
    for (int k = 1; k <= T; ++k) data.rates.push_back(rv_from_json(tree, k - 1, rates[static_cast<std::size_t>(k - 1)]));
    if (j.contains("filtration_F")) data.sub_filtration = j.at("filtration_F").get<LeafPartitions>();
    return MarketModel::create(std::move(data));
}

Json prefs_to_json(const HabitPreferences& p) {
    Json j;
    j["family"] = to_string(p.family);
    j["gamma"] = p.gammas;
    j["rho"] = p.rho;
    j["beta"] = p.beta.rows();
    if (!p.h.empty()) j["h"] = process_to_json(p.h);
    return j;
}

HabitPreferences prefs_from_json(const EventTree& tree, const Json& j) {
    const int T = tree.horizon();
    const auto family = get<std::string>(j, "family");
    const double rho = j.value("rho", 0.0);
    HabitWeights beta = HabitWeights::none(T);
    if (j.contains("beta")) {
        const Json& b = j.at("beta");
        if (b.is_number()) {
            beta = HabitWeights::one_lag(T, b.get<double>());
        } else {
            beta = HabitWeights::from_rows(T, b.get<std::vector<std::vector<double>>>());
        }
    }
    AdaptedProcess h;
    if (j.contains("h")) h = process_from_json(tree, j.at("h"));
    std::vector<double> gammas;
    if (j.contains("gamma")) {
        gammas = j.at("gamma").is_number() ? std::vector<double>{j.at("gamma").get<double>()}
                                           : j.at("gamma").get<std::vector<double>>();
    }
    if (family == "power") {
        if (gammas.empty()) throw Error(ErrorKind::InvalidInput, "power utility needs gamma");
        return HabitPreferences::power(T, gammas, rho, std::move(beta), std::move(h));
    }
    if (family == "log") return HabitPreferences::log(T, rho, std::move(beta), std::move(h));
    if (family == "exp" || family == "exponential") {
        if (gammas.empty()) throw Error(ErrorKind::InvalidInput, "exponential utility needs gamma");
        return HabitPreferences::exponential(T, gammas.front(), rho, std::move(beta), std::move(h));
    }
    throw Error(ErrorKind::InvalidInput, "unknown utility family '" + family + "'");
}

Json endowment_to_json(const AdaptedProcess& eps) { return Json{{"eps", process_to_json(eps)}}; }

AdaptedProcess endowment_from_json(const EventTree& tree, const Json& j) {
    return process_from_json(tree, j.contains("eps") ? j.at("eps") : j);
}

Json solution_to_json(const Solution& s) {
    Json j;
    j["method"] = s.diagnostics.method;
    j["c"] = process_to_json(s.c);
    j["W"] = process_to_json(s.W);
    j["I"] = process_to_json(s.I);
    if (!s.R.empty()) j["R"] = process_to_json(s.R);
    Json pi = Json::array();
    for (const auto& level : s.pi) {
        Json l = Json::array();
        for (const auto& v : level) l.push_back(std::vector<double>(v.data(), v.data() + v.size()));
        pi.push_back(l);
    }
    j["pi"] = pi;
    j["U"] = s.U;
    j["period_U"] = s.period_U;
    Json d;
    d["iterations"] = s.diagnostics.iterations;
    d["gradient_norm"] = s.diagnostics.gradient_norm;
    d["converged"] = s.diagnostics.converged;
    d["foc_residual"] = s.diagnostics.foc;
    d["simplified_foc_residual"] = s.diagnostics.simplified_foc;
    d["negative_consumption"] = s.diagnostics.negative_consumption;
    d["notes"] = s.diagnostics.notes;
    j["diagnostics"] = d;
    return j;
}

}  // namespace habitopt
