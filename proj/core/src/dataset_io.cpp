#include "fedlmf/dataset_io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedlmf/errors.hpp"

namespace fedlmf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

constexpr const char* kSamplesHeader = "#fedlmf-dataset v1";
constexpr const char* kGraphHeaderPrefix = "#fedlmf-graph v1";

double parse_double(const std::string& tok, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ParseError("bad float '" + tok + "'", line);
    return v;
}

long parse_long(const std::string& tok, std::size_t line) {
    long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ParseError("bad integer '" + tok + "'", line);
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string join_values(const std::vector<double>& vals) {
    std::string out;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) out += ",";
        out += format_double(vals[i]);
    }
    return out;
}

std::vector<double> parse_values(const std::string& s, std::size_t line) {
    std::vector<double> out;
    for (const std::string& tok : split(s, ',')) out.push_back(parse_double(tok, line));
    return out;
}

void write_sample(std::ofstream& f, const TrendSample& s, const char* split_tag) {
    f << s.company_id << '\t' << s.position_id << '\t' << s.global_t1 << '\t' << s.global_t2 << '\t'
      << split_tag << '\t' << s.demand_label << '\t' << s.supply_label << '\t'
      << join_values(s.demand_window) << '\t' << join_values(s.supply_window) << '\n';
}

}  // namespace

void save_dataset(const FederatedDataset& ds, const std::string& dir) {
    fs::create_directories(dir);

    {
        std::ofstream f(fs::path(dir) / "samples.tsv", std::ios::binary);
        f << kSamplesHeader << '\n';
        for (const ClientDataset& c : ds.clients) {
            for (const TrendSample& s : c.train) write_sample(f, s, "train");
            for (const TrendSample& s : c.validation) write_sample(f, s, "val");
            for (const TrendSample& s : c.test) write_sample(f, s, "test");
        }
    }

    {
        std::ofstream f(fs::path(dir) / "graph.tsv", std::ios::binary);
        f << kGraphHeaderPrefix << ' ' << ds.graph.length() << ' ' << ds.graph.n_companies << ' '
          << ds.graph.n_positions << '\n';
        for (std::size_t t = 0; t < ds.graph.length(); ++t) {
            const CPHG& g = ds.graph.snapshots[t];
            for (const Edge& e : g.cc)
                f << t << "\tC\t" << e.src << "\tC\t" << e.dst << '\t' << format_double(e.weight) << '\n';
            for (const Edge& e : g.pp)
                f << t << "\tP\t" << e.src << "\tP\t" << e.dst << '\t' << format_double(e.weight) << '\n';
            for (const Edge& e : g.cp)
                f << t << "\tC\t" << e.src << "\tP\t" << e.dst << '\t' << format_double(e.weight) << '\n';
        }
    }

    {
        json meta;
        meta["version"] = 1;
        meta["config"] = {
            {"n_companies", ds.config.n_companies},
            {"n_positions", ds.config.n_positions},
            {"t_total", ds.config.t_total},
            {"n_regimes", ds.config.n_regimes},
            {"longtail_exponent", ds.config.longtail_exponent},
            {"demand_supply_coupling", ds.config.demand_supply_coupling},
            {"noise_scale", ds.config.noise_scale},
            {"seed", ds.config.seed},
            {"l_min", ds.config.l_min},
        };
        meta["regimes"] = ds.regimes;
        meta["dropped_companies"] = ds.dropped_companies;
        std::ofstream f(fs::path(dir) / "meta.json", std::ios::binary);
        f << meta.dump(2) << '\n';
    }
}

FederatedDataset load_dataset(const std::string& dir) {
    FederatedDataset ds;

    {
        std::ifstream f(fs::path(dir) / "meta.json", std::ios::binary);
        if (!f) throw ParseError("missing meta.json", 0);
        json meta;
        try {
            f >> meta;
        } catch (const json::exception& e) {
            throw ParseError(std::string("meta.json: ") + e.what(), 0);
        }
        const json& c = meta.at("config");
        ds.config.n_companies = c.at("n_companies").get<int>();
        ds.config.n_positions = c.at("n_positions").get<int>();
        ds.config.t_total = c.at("t_total").get<int>();
        ds.config.n_regimes = c.at("n_regimes").get<int>();
        ds.config.longtail_exponent = c.at("longtail_exponent").get<double>();
        ds.config.demand_supply_coupling = c.at("demand_supply_coupling").get<double>();
        ds.config.noise_scale = c.at("noise_scale").get<double>();
        ds.config.seed = c.at("seed").get<std::uint64_t>();
        ds.config.l_min = c.at("l_min").get<int>();
        ds.regimes = meta.at("regimes").get<std::vector<int>>();
        ds.dropped_companies = meta.at("dropped_companies").get<std::vector<int>>();
    }

    {
        std::ifstream f(fs::path(dir) / "samples.tsv", std::ios::binary);
        if (!f) throw ParseError("missing samples.tsv", 0);
        std::string line;
        std::size_t lineno = 0;
        if (!std::getline(f, line)) throw ParseError("empty samples.tsv", 1);
        ++lineno;
        if (line != kSamplesHeader) throw ParseError("bad dataset header", lineno);

        std::map<int, ClientDataset> clients;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            const std::vector<std::string> tok = split(line, '\t');
            if (tok.size() != 9) throw ParseError("expected 9 fields, got " + std::to_string(tok.size()), lineno);
            TrendSample s;
            s.company_id = static_cast<int>(parse_long(tok[0], lineno));
            s.position_id = static_cast<int>(parse_long(tok[1], lineno));
            s.global_t1 = static_cast<int>(parse_long(tok[2], lineno));
            s.global_t2 = static_cast<int>(parse_long(tok[3], lineno));
            s.demand_label = static_cast<int>(parse_long(tok[5], lineno));
            s.supply_label = static_cast<int>(parse_long(tok[6], lineno));
            s.demand_window = parse_values(tok[7], lineno);
            s.supply_window = parse_values(tok[8], lineno);
            ClientDataset& c = clients.try_emplace(s.company_id).first->second;
            c.company_id = s.company_id;
            if (tok[4] == "train") c.train.push_back(std::move(s));
            else if (tok[4] == "val") c.validation.push_back(std::move(s));
            else if (tok[4] == "test") c.test.push_back(std::move(s));
            else throw ParseError("unknown split tag '" + tok[4] + "'", lineno);
        }
        for (auto& [id, c] : clients) ds.clients.push_back(std::move(c));
    }

    {
        std::ifstream f(fs::path(dir) / "graph.tsv", std::ios::binary);
        if (!f) throw ParseError("missing graph.tsv", 0);
        std::string line;
        std::size_t lineno = 0;
        if (!std::getline(f, line)) throw ParseError("empty graph.tsv", 1);
        ++lineno;
        std::istringstream hdr(line);
        std::string magic, version;
        std::size_t t_len = 0;
        int nc = 0, np = 0;
        hdr >> magic >> version >> t_len >> nc >> np;
        if (magic + " " + version != kGraphHeaderPrefix || hdr.fail())
            throw ParseError("bad graph header", lineno);
        ds.graph.n_companies = nc;
        ds.graph.n_positions = np;
        ds.graph.snapshots.assign(t_len, CPHG{nc, np, {}, {}, {}});

        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            const std::vector<std::string> tok = split(line, '\t');
            if (tok.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(tok.size()), lineno);
            const std::size_t t = static_cast<std::size_t>(parse_long(tok[0], lineno));
            if (t >= t_len) throw ParseError("timestamp out of range", lineno);
            const std::string& sk = tok[1];
            const std::string& dk = tok[3];
            Edge e;
            e.src = static_cast<int>(parse_long(tok[2], lineno));
            e.dst = static_cast<int>(parse_long(tok[4], lineno));
            e.weight = parse_double(tok[5], lineno);
            CPHG& g = ds.graph.snapshots[t];
            if (sk == "C" && dk == "C") g.cc.push_back(e);
            else if (sk == "P" && dk == "P") g.pp.push_back(e);
            else if (sk == "C" && dk == "P") g.cp.push_back(e);
            else throw ParseError("unknown edge kinds '" + sk + "/" + dk + "'", lineno);
        }
        validate(ds.graph);
    }

    return ds;
}

}  // namespace fedlmf
