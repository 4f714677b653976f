#include "floodcpf/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "floodcpf/tensor.hpp"

namespace floodcpf {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double field_double(const std::string& line, const std::string& key) {
    check(line.size() > key.size() + 1 && line.compare(0, key.size(), key) == 0 &&
              line[key.size()] == '=',
          "stats: expected " + key + "=..., got: " + line);
    char* end = nullptr;
    const std::string v = line.substr(key.size() + 1);
    const double x = std::strtod(v.c_str(), &end);
    check(end == v.c_str() + v.size() && !v.empty(), "stats: bad number in line: " + line);
    return x;
}

}  // namespace

void write_trainlog(const std::vector<TrainLogRow>& rows, const std::string& path) {
    std::ostringstream os;
    os << "epoch,train_loss,val_iou,seconds\n";
    for (const TrainLogRow& r : rows)
        os << r.epoch << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.val_iou) << ','
           << fmt_double(r.seconds) << '\n';
    write_text_atomic(path, os.str());
}

std::vector<TrainLogRow> read_trainlog(const std::string& path) {
    const std::vector<char> raw = read_file(path);
    std::istringstream is(std::string(raw.begin(), raw.end()));
    std::string line;
    check(static_cast<bool>(std::getline(is, line)) && line == "epoch,train_loss,val_iou,seconds",
          "trainlog: bad header in " + path);
    std::vector<TrainLogRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        TrainLogRow r;
        std::istringstream ls(line);
        char c1 = 0, c2 = 0, c3 = 0;
        ls >> r.epoch >> c1 >> r.train_loss >> c2 >> r.val_iou >> c3 >> r.seconds;
        check(!ls.fail() && c1 == ',' && c2 == ',' && c3 == ',',
              "trainlog: malformed row: " + line);
        rows.push_back(r);
    }
    return rows;
}

template <typename T>
void save_params(const std::vector<Parameter<T>*>& params, const std::string& dir) {
    std::ostringstream bin, index;
    for (const Parameter<T>* p : params) {
        check(p != nullptr && !p->name.empty(), "save_params: unnamed parameter");
        const i64 offset = static_cast<i64>(bin.tellp());
        save_tensor(bin, p->value);
        const i64 nbytes = static_cast<i64>(bin.tellp()) - offset;
        index << p->name << ' ' << offset << ' ' << nbytes << '\n';
    }
    const std::string blob = bin.str();
    write_file_atomic(dir + "/params.bin", blob.data(), blob.size());
    write_text_atomic(dir + "/index.txt", index.str());
}

template <typename T>
void load_params(const std::vector<Parameter<T>*>& params, const std::string& dir) {
    const std::vector<char> raw_index = read_file(dir + "/index.txt");
    const std::vector<char> blob = read_file(dir + "/params.bin");
    std::map<std::string, std::pair<i64, i64>> ranges;
    std::istringstream is(std::string(raw_index.begin(), raw_index.end()));
    std::string name;
    i64 offset = 0, nbytes = 0;
    while (is >> name >> offset >> nbytes) {
        check(offset >= 0 && nbytes > 0 && offset + nbytes <= static_cast<i64>(blob.size()),
              "load_params: index range outside params.bin for " + name);
        check(ranges.emplace(name, std::make_pair(offset, nbytes)).second,
              "load_params: duplicate parameter " + name);
    }
    check(ranges.size() == params.size(),
          "load_params: checkpoint holds " + std::to_string(ranges.size()) +
              " parameters, model expects " + std::to_string(params.size()));
    for (Parameter<T>* p : params) {
        const auto it = ranges.find(p->name);
        check(it != ranges.end(), "load_params: missing parameter " + p->name);
        std::istringstream ts(std::string(blob.data() + it->second.first,
                                          static_cast<std::size_t>(it->second.second)));
        const Tensor<T> t = load_tensor<T>(ts);
        check(t.shape() == p->value.shape(), "load_params: shape mismatch for " + p->name);
        std::copy(t.data(), t.data() + t.numel(), p->value.data());
    }
}

void write_feature_stats(const FeatureStats& stats, const std::string& path) {
    std::ostringstream os;
    for (int c = 0; c < 4; ++c) os << "feature_mean_" << c << '=' << fmt_double(stats.mean[c]) << '\n';
    for (int c = 0; c < 4; ++c)
        os << "feature_std_" << c << '=' << fmt_double(stats.stddev[c]) << '\n';
    write_text_atomic(path, os.str());
}

FeatureStats read_feature_stats(const std::string& path) {
    const std::vector<char> raw = read_file(path);
    std::istringstream is(std::string(raw.begin(), raw.end()));
    FeatureStats stats;
    std::string line;
    for (int c = 0; c < 4; ++c) {
        check(static_cast<bool>(std::getline(is, line)), "stats: truncated file " + path);
        stats.mean[static_cast<std::size_t>(c)] =
            field_double(line, "feature_mean_" + std::to_string(c));
    }
    for (int c = 0; c < 4; ++c) {
        check(static_cast<bool>(std::getline(is, line)), "stats: truncated file " + path);
        stats.stddev[static_cast<std::size_t>(c)] =
            field_double(line, "feature_std_" + std::to_string(c));
    }
    return stats;
}

void save_checkpoint(const std::string& dir, const ExperimentConfig& cfg,
                     const std::vector<Parameter<float>*>& params, const FeatureStats& stats,
                     const SplitManifest& splits) {
    write_text_atomic(dir + "/config.txt", serialize_config(cfg));
    save_params(params, dir);
    write_feature_stats(stats, dir + "/stats.txt");
    write_splits(splits, dir + "/splits.csv");
}

ExperimentConfig read_checkpoint_config(const std::string& dir) {
    return load_config(dir + "/config.txt");
}

template void save_params<float>(const std::vector<Parameter<float>*>&, const std::string&);
template void save_params<double>(const std::vector<Parameter<double>*>&, const std::string&);
template void load_params<float>(const std::vector<Parameter<float>*>&, const std::string&);
template void load_params<double>(const std::vector<Parameter<double>*>&, const std::string&);

}  // namespace floodcpf
