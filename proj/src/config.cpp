#include "floodcpf/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <vector>

#include "floodcpf/data.hpp"

namespace floodcpf {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    check(end == v.c_str() + v.size() && !v.empty() && std::isfinite(x),
          "config: bad number for " + key + ": " + v);
    return x;
}

i64 parse_i64(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    check(end == v.c_str() + v.size() && !v.empty(), "config: bad integer for " + key + ": " + v);
    return static_cast<i64>(x);
}

u64 parse_u64(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    check(end == v.c_str() + v.size() && !v.empty() && v[0] != '-',
          "config: bad unsigned integer for " + key + ": " + v);
    return static_cast<u64>(x);
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
    check(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0, "config: adam_beta1 must be in [0,1)");
    check(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0, "config: adam_beta2 must be in [0,1)");
    check(cfg.adam_eps > 0.0, "config: adam_eps must be positive");
    check(cfg.augment == 0 || cfg.augment == 1, "config: augment must be 0 or 1");
    check(cfg.base_width >= 1, "config: base_width must be >= 1");
    check(cfg.batch_size >= 1, "config: batch_size must be >= 1");
    check(cfg.depth >= 1 && cfg.depth <= 6, "config: depth must be in [1,6]");
    check(cfg.epochs >= 0, "config: epochs must be >= 0");
    check(cfg.eps_feature > 0.0, "config: eps_feature must be positive");
    check(cfg.eps_prob > 0.0 && cfg.eps_prob < 0.5, "config: eps_prob must be in (0,0.5)");
    check(cfg.lr > 0.0 && std::isfinite(cfg.lr), "config: lr must be positive");
    check(cfg.patch >= 8, "config: patch must be >= 8");
    check(cfg.patch % (i64{1} << cfg.depth) == 0,
          "config: patch must be divisible by 2^depth");
    check(cfg.split_train > 0.0 && cfg.split_val >= 0.0 && cfg.split_test >= 0.0,
          "config: split fractions must be nonnegative with split_train > 0");
    check(std::abs(cfg.split_train + cfg.split_val + cfg.split_test - 1.0) <= 1e-9,
          "config: split fractions must sum to 1");
    check(cfg.stem_depth >= 1, "config: stem_depth must be >= 1");
    check(cfg.stem_width >= 1, "config: stem_width must be >= 1");
    check(cfg.cpf_reduction >= 1 && cfg.stem_width % cfg.cpf_reduction == 0,
          "config: cpf_reduction must divide stem_width");
    check(cfg.cpf_sa_kernel >= 1 && cfg.cpf_sa_kernel % 2 == 1,
          "config: cpf_sa_kernel must be odd");
    check(cfg.tau > 0.0 && cfg.tau < 1.0, "config: tau must be strictly inside (0,1)");
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream os;  // keys in sorted order; keep in sync with parse_config
    os << "adam_beta1=" << fmt_double(c.adam_beta1) << '\n';
    os << "adam_beta2=" << fmt_double(c.adam_beta2) << '\n';
    os << "adam_eps=" << fmt_double(c.adam_eps) << '\n';
    os << "augment=" << c.augment << '\n';
    os << "backbone=" << backbone_kind_name(c.backbone) << '\n';
    os << "base_width=" << c.base_width << '\n';
    os << "batch_size=" << c.batch_size << '\n';
    os << "cpf_reduction=" << c.cpf_reduction << '\n';
    os << "cpf_sa_kernel=" << c.cpf_sa_kernel << '\n';
    os << "cpf_wiring=" << wiring_name(c.cpf_wiring) << '\n';
    os << "depth=" << c.depth << '\n';
    os << "epochs=" << c.epochs << '\n';
    os << "eps_feature=" << fmt_double(c.eps_feature) << '\n';
    os << "eps_prob=" << fmt_double(c.eps_prob) << '\n';
    os << "lr=" << fmt_double(c.lr) << '\n';
    os << "manifest=" << c.manifest << '\n';
    os << "mode=" << fusion_mode_name(c.mode) << '\n';
    os << "patch=" << c.patch << '\n';
    os << "seed=" << c.seed << '\n';
    os << "split_test=" << fmt_double(c.split_test) << '\n';
    os << "split_train=" << fmt_double(c.split_train) << '\n';
    os << "split_val=" << fmt_double(c.split_val) << '\n';
    os << "stem_depth=" << c.stem_depth << '\n';
    os << "stem_width=" << c.stem_width << '\n';
    os << "tau=" << fmt_double(c.tau) << '\n';
    return os.str();
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        check(eq != std::string::npos, "config: malformed line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        check(seen.insert(key).second, "config: duplicate key " + key);
        if (key == "adam_beta1") c.adam_beta1 = parse_double(key, val);
        else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, val);
        else if (key == "adam_eps") c.adam_eps = parse_double(key, val);
        else if (key == "augment") c.augment = parse_i64(key, val);
        else if (key == "backbone") c.backbone = parse_backbone_kind(val);
        else if (key == "base_width") c.base_width = parse_i64(key, val);
        else if (key == "batch_size") c.batch_size = parse_i64(key, val);
        else if (key == "cpf_reduction") c.cpf_reduction = parse_i64(key, val);
        else if (key == "cpf_sa_kernel") c.cpf_sa_kernel = parse_i64(key, val);
        else if (key == "cpf_wiring") c.cpf_wiring = parse_wiring(val);
        else if (key == "depth") c.depth = parse_i64(key, val);
        else if (key == "epochs") c.epochs = parse_i64(key, val);
        else if (key == "eps_feature") c.eps_feature = parse_double(key, val);
        else if (key == "eps_prob") c.eps_prob = parse_double(key, val);
        else if (key == "lr") c.lr = parse_double(key, val);
        else if (key == "manifest") c.manifest = val;
        else if (key == "mode") c.mode = parse_fusion_mode(val);
        else if (key == "patch") c.patch = parse_i64(key, val);
        else if (key == "seed") c.seed = parse_u64(key, val);
        else if (key == "split_test") c.split_test = parse_double(key, val);
        else if (key == "split_train") c.split_train = parse_double(key, val);
        else if (key == "split_val") c.split_val = parse_double(key, val);
        else if (key == "stem_depth") c.stem_depth = parse_i64(key, val);
        else if (key == "stem_width") c.stem_width = parse_i64(key, val);
        else if (key == "tau") c.tau = parse_double(key, val);
        else fail("config: unknown key " + key);
    }
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    const std::vector<char> raw = read_file(path);
    return parse_config(std::string(raw.begin(), raw.end()));
}

StemConfig stem_config(const ExperimentConfig& cfg) {
    StemConfig s;
    s.depth = cfg.stem_depth;
    s.width = cfg.stem_width;
    return s;
}

CpfConfig cpf_config(const ExperimentConfig& cfg) {
    CpfConfig c;
    c.channels = cfg.stem_width;  // stems feed the fusion block directly
    c.out_channels = cfg.stem_width;
    c.reduction = cfg.cpf_reduction;
    c.sa_kernel = cfg.cpf_sa_kernel;
    c.wiring = cfg.cpf_wiring;
    return c;
}

BackboneConfig backbone_config(const ExperimentConfig& cfg) {
    BackboneConfig b;
    b.kind = cfg.backbone;
    b.depth = cfg.depth;
    b.base_width = cfg.base_width;
    b.mode = cfg.mode;
    return b;
}

}  // namespace floodcpf
