// SPDX-License-Identifier: Apache-2.0

#include "segstream/weights_io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "segstream/tensor_io.hpp"

namespace segstream {

namespace {

Mat as_row(const std::vector<float> &v) { return Mat(1, v.size(), v); }

std::vector<float> as_vector(const Mat &m, const std::string &name) {
    if (m.rows != 1) {
        throw FormatError("weights: " + name + " must be a 1 x n tensor, got " + m.shape_str());
    }
    return m.data;
}

// Visits every named tensor in manifest order.
template <typename Weights, typename Mats, typename Vecs>
void for_each_tensor(Weights &w, Mats &&on_mat, Vecs &&on_vec) {
    on_mat("frontend.conv1.weight", w.frontend.conv1.weight);
    on_vec("frontend.conv1.bias", w.frontend.conv1.bias);
    on_mat("frontend.conv2.weight", w.frontend.conv2.weight);
    on_vec("frontend.conv2.bias", w.frontend.conv2.bias);
    on_mat("frontend.proj.weight", w.frontend.proj);
    on_vec("frontend.proj.bias", w.frontend.proj_bias);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        auto &l = w.layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        on_vec(p + "attn_norm.gamma", l.attn.pre_norm.gamma);
        on_vec(p + "attn_norm.beta", l.attn.pre_norm.beta);
        on_mat(p + "wq", l.attn.wq);
        on_mat(p + "wk", l.attn.wk);
        on_mat(p + "wv", l.attn.wv);
        on_mat(p + "wo", l.attn.wo);
        on_mat(p + "rel_table", l.attn.rel_table);
        on_vec(p + "ffn_norm.gamma", l.ffn_norm.gamma);
        on_vec(p + "ffn_norm.beta", l.ffn_norm.beta);
        on_mat(p + "ffn1.weight", l.ffn_w1);
        on_vec(p + "ffn1.bias", l.ffn_b1);
        on_mat(p + "ffn2.weight", l.ffn_w2);
        on_vec(p + "ffn2.bias", l.ffn_b2);
    }
}

} // namespace

std::filesystem::path save_weights(const std::filesystem::path &dir, const EncoderWeights &w) {
    std::filesystem::create_directories(dir);
    const auto manifest_path = dir / "manifest.txt";
    std::ofstream manifest(manifest_path);
    if (!manifest) {
        throw FormatError("weights: cannot write " + manifest_path.string());
    }
    manifest << "# segstream weights: name path\n";
    auto write = [&](const std::string &name, const Mat &m) {
        const std::string file = name + ".sgt";
        save_tensor(dir / file, m);
        manifest << name << ' ' << file << '\n';
    };
    for_each_tensor(
        w, [&](const std::string &name, const Mat &m) { write(name, m); },
        [&](const std::string &name, const std::vector<float> &v) { write(name, as_row(v)); });
    return manifest_path;
}

EncoderWeights load_weights(const std::filesystem::path &manifest, const EncoderConfig &cfg) {
    cfg.validate();
    std::ifstream in(manifest);
    if (!in) {
        throw FormatError("weights: cannot open manifest " + manifest.string());
    }
    std::map<std::string, std::filesystem::path> files;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::string name, path;
        if (!(fields >> name >> path)) {
            throw FormatError("weights: malformed manifest line '" + line + "'");
        }
        files[name] = manifest.parent_path() / path;
    }

    auto load = [&](const std::string &name) {
        const auto it = files.find(name);
        if (it == files.end()) {
            throw FormatError("weights: manifest is missing " + name);
        }
        return load_tensor(it->second);
    };

    EncoderWeights w;
    w.layers.resize(cfg.num_layers);
    for_each_tensor(
        w, [&](const std::string &name, Mat &m) { m = load(name); },
        [&](const std::string &name, std::vector<float> &v) { v = as_vector(load(name), name); });

    auto conv_geometry = [&](ConvKernel &k, std::size_t in_dim) {
        k.width = cfg.subsample.kernel_width;
        k.in_dim = in_dim;
        k.out_dim = k.weight.cols;
    };
    conv_geometry(w.frontend.conv1, cfg.input_dim);
    conv_geometry(w.frontend.conv2, cfg.d);
    for (auto &l : w.layers) {
        l.attn.heads = cfg.heads;
        l.attn.clip = cfg.clip;
        l.attn.pre_norm.eps = cfg.ln_eps;
        l.ffn_norm.eps = cfg.ln_eps;
    }
    w.validate(cfg);
    return w;
}

} // namespace segstream
