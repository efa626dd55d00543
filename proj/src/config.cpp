#include "glhm/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace glhm {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_number(const std::string& key, const std::string& v)
{
    errno = 0;
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || errno != 0 || trim(end).size() != 0)
        throw ConfigError("key " + key + ": '" + v + "' is not a number");
    return d;
}

} // namespace

const std::map<std::string, std::string>& RunConfig::defaults()
{
    static const std::map<std::string, std::string> d = {
        {"grid.m", "2"},
        {"grid.extent", "1.25"},
        {"grid.n", "251"},
        {"target.gamma", "0.4"},
        {"target.floor", "0.05"},
        {"solver.eps", "0.05"},
        {"solver.tol", "1e-5"},
        {"solver.max_iter", "400000"},
        {"solver.step_factor", "0.9"},
        {"solver.relax", "0"},
        {"solver.pin", "0"},
        {"kernel.R", "8"},
        {"decomp.delta", "0.25"},
        {"decomp.delta1", "0.05"},
        {"decomp.delta2", "0.35"},
        {"decomp.eps0", "1"},
        {"decomp.lambda", "0"},
        {"decomp.spawn_c", "0.01"},
        {"decomp.sub_scale", "0.1"},
        {"decomp.vitali", "0.333333333333"},
        {"decomp.root_radius", "1"},
        {"decomp.cover_samples", "10000"},
        {"experiment.fixture", "bubble"},
        {"experiment.sigma", "0.05"},
        {"experiment.sigma2", "0.02"},
        {"experiment.separation", "0.5"},
        {"experiment.degree", "1"},
        {"experiment.tilt_deg", "0"},
        {"experiment.points", "0 0"},
        {"experiment.radii", "0.1 0.2"},
        {"experiment.shell_width", "0.25"},
        {"experiment.tolerance", "0.02"},
        {"experiment.eps_schedule", "0.2 0.1 0.05"},
        {"experiment.sigma_factor", "2"},
        {"experiment.slice_radius", "2.5"},
        {"experiment.slice_offsets", "-0.4 0 0.4"},
        {"experiment.root_fraction", "0.95"},
        {"experiment.probe_s", "1.4 1.6 1.8 2.0 2.2"},
        {"experiment.probe_z", "-0.3 -0.1 0 0.1 0.3"},
        {"experiment.slack", "0.2"},
        {"experiment.seed", "1"},
    };
    return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::parse(const std::string& text)
{
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!c.has(key)) throw ConfigError("line " + std::to_string(lineno) + ": unknown key " + key);
        c.set(key, value);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::emit() const
{
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    if (!has(key)) throw ConfigError("unknown key " + key);
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key " + key);
    return it->second;
}

double RunConfig::number(const std::string& key) const { return to_number(key, get(key)); }

int RunConfig::integer(const std::string& key) const
{
    const double d = number(key);
    if (d != static_cast<int>(d)) throw ConfigError("key " + key + " must be an integer");
    return static_cast<int>(d);
}

std::vector<double> RunConfig::list(const std::string& key) const
{
    std::string v = get(key);
    for (char& ch : v)
        if (ch == ',' || ch == ';') ch = ' ';
    std::istringstream is(v);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(to_number(key, tok));
    return out;
}

} // namespace glhm
