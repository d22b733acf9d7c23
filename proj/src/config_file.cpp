// SPDX-License-Identifier: Apache-2.0

#include "segstream/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace segstream {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_count(const std::string &key, const std::string &value) {
    std::size_t out = 0;
    const auto *end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + value +
                          "'");
    }
    return out;
}

float parse_float(const std::string &key, const std::string &value) {
    float out = 0.0f;
    const auto *end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
    }
    return out;
}

using Setter = std::function<void(EncoderConfig &, const std::string &, const std::string &)>;

const std::map<std::string, Setter> &setters() {
    static const std::map<std::string, Setter> table = {
        {"layers", [](auto &c, auto &k, auto &v) { c.num_layers = parse_count(k, v); }},
        {"d", [](auto &c, auto &k, auto &v) { c.d = parse_count(k, v); }},
        {"heads", [](auto &c, auto &k, auto &v) { c.heads = parse_count(k, v); }},
        {"left", [](auto &c, auto &k, auto &v) { c.layout.left = parse_count(k, v); }},
        {"center", [](auto &c, auto &k, auto &v) { c.layout.center = parse_count(k, v); }},
        {"right", [](auto &c, auto &k, auto &v) { c.layout.right = parse_count(k, v); }},
        {"banks", [](auto &c, auto &k, auto &v) { c.bank_capacity = parse_count(k, v); }},
        {"clip", [](auto &c, auto &k, auto &v) { c.clip = parse_count(k, v); }},
        {"variant", [](auto &c, auto &, auto &v) { c.variant = parse_variant(v); }},
        {"subsample_kernel",
         [](auto &c, auto &k, auto &v) { c.subsample.kernel_width = parse_count(k, v); }},
        {"subsample_stride",
         [](auto &c, auto &k, auto &v) { c.subsample.stride = parse_count(k, v); }},
        {"ffn_dim", [](auto &c, auto &k, auto &v) { c.ffn_dim = parse_count(k, v); }},
        {"input_dim", [](auto &c, auto &k, auto &v) { c.input_dim = parse_count(k, v); }},
        {"z_tap", [](auto &c, auto &, auto &v) { c.z_tap = parse_z_tap(v); }},
        {"ln_eps", [](auto &c, auto &k, auto &v) { c.ln_eps = parse_float(k, v); }},
    };
    return table;
}

} // namespace

EncoderConfig parse_config(std::istream &in, EncoderConfig base) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
        }
        it->second(base, key, value);
    }
    base.validate();
    return base;
}

EncoderConfig load_config(const std::filesystem::path &path, EncoderConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path.string());
    }
    return parse_config(in, std::move(base));
}

std::string format_config(const EncoderConfig &cfg) {
    std::ostringstream out;
    out << "layers = " << cfg.num_layers << "\n"
        << "d = " << cfg.d << "\n"
        << "heads = " << cfg.heads << "\n"
        << "left = " << cfg.layout.left << "\n"
        << "center = " << cfg.layout.center << "\n"
        << "right = " << cfg.layout.right << "\n"
        << "banks = " << cfg.bank_capacity << "\n"
        << "clip = " << cfg.clip << "\n"
        << "variant = " << to_string(cfg.variant) << "\n"
        << "subsample_kernel = " << cfg.subsample.kernel_width << "\n"
        << "subsample_stride = " << cfg.subsample.stride << "\n"
        << "ffn_dim = " << cfg.ffn_dim << "\n"
        << "input_dim = " << cfg.input_dim << "\n"
        << "z_tap = " << to_string(cfg.z_tap) << "\n";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, cfg.ln_eps);
    (void)ec;
    out << "ln_eps = " << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << "\n";
    return out.str();
}

} // namespace segstream
