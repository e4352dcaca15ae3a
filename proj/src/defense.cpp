#include "advlab/defense.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "advlab/errors.hpp"

namespace advlab {

bool DefenseChain::stochastic() const {
    if (crop_ensemble) return true;
    return std::any_of(steps.begin(), steps.end(),
                       [](const TransformStep& s) { return s.stochastic(); });
}

Image apply_transform(const TransformStep& step, const Image& x, SeedStream stream) {
    switch (step.kind) {
        case TransformKind::BitDepth:
            return bit_depth_reduce(x, step.bits);
        case TransformKind::Jpeg:
            return jpeg_roundtrip(x, step.jpeg);
        case TransformKind::Tvm:
            return tvm_defense(x, step.tvm, stream);
        case TransformKind::Quilt: {
            if (!step.db) throw InvalidInputError("quilt transform without a database");
            QuiltConfig cfg = step.quilt;
            cfg.stream = stream;
            return quilt(x, *step.db, cfg);
        }
        case TransformKind::CropDraw:
            return crop_rescale_draw(x, step.crop_fraction, stream);
    }
    throw InvalidInputError("unknown transform kind");
}

Image apply_chain_transforms(const DefenseChain& chain, const Image& x, SeedStream stream) {
    Image cur = x;
    for (std::size_t i = 0; i < chain.steps.size(); ++i)
        cur = apply_transform(chain.steps[i], cur, stream.child(i));
    return cur;
}

namespace {

struct KvList {
    std::string name;
    std::vector<std::pair<std::string, double>> kv;

    double get(const std::string& key, double fallback) const {
        for (const auto& [k, v] : kv)
            if (k == key) return v;
        return fallback;
    }
};

KvList parse_step(const std::string& token) {
    KvList out;
    auto colon = token.find(':');
    out.name = token.substr(0, colon);
    if (colon == std::string::npos) return out;
    std::stringstream args(token.substr(colon + 1));
    std::string item;
    while (std::getline(args, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw InvalidInputError("defense spec: expected k=v in '" + item + "'");
        out.kv.emplace_back(item.substr(0, eq), std::strtod(item.c_str() + eq + 1, nullptr));
    }
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

} // namespace

DefenseChain parse_defense_chain(const std::string& spec, const PatchDatabase* db,
                                 bool materialize_crop) {
    DefenseChain chain;
    chain.name = spec;
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, '+')) {
        token = trim(token);
        if (token.empty() || token == "none") continue;
        KvList step = parse_step(token);
        if (chain.crop_ensemble)
            throw InvalidInputError("defense spec: crop ensemble must be the last step");
        if (step.name == "bitdepth") {
            TransformStep t;
            t.kind = TransformKind::BitDepth;
            t.bits = int(step.get("bits", 3));
            chain.steps.push_back(t);
        } else if (step.name == "jpeg") {
            TransformStep t;
            t.kind = TransformKind::Jpeg;
            t.jpeg.quality = int(step.get("quality", 75));
            chain.steps.push_back(t);
        } else if (step.name == "tvm") {
            TransformStep t;
            t.kind = TransformKind::Tvm;
            t.tvm.lambda_tv = step.get("lambda", 0.03);
            t.tvm.keep_prob = step.get("keep", 0.5);
            t.tvm.p = int(step.get("p", 2));
            t.tvm.max_iterations = int(step.get("iters", 500));
            chain.steps.push_back(t);
        } else if (step.name == "quilt") {
            TransformStep t;
            t.kind = TransformKind::Quilt;
            t.db = db;
            if (!db) throw InvalidInputError("defense spec: quilt requires --db");
            t.quilt.patch_size = db->patch_size;
            t.quilt.overlap = int(step.get("overlap", 2));
            t.quilt.k = int(step.get("k", 1));
            chain.steps.push_back(t);
        } else if (step.name == "crop") {
            if (materialize_crop) {
                TransformStep t;
                t.kind = TransformKind::CropDraw;
                t.crop_fraction = step.get("frac", 90.0 / 224.0);
                chain.steps.push_back(t);
            } else {
                chain.crop_ensemble = true;
                chain.crop.num_crops = int(step.get("n", 30));
                chain.crop.crop_fraction = step.get("frac", 90.0 / 224.0);
            }
        } else {
            throw InvalidInputError("defense spec: unknown transform '" + step.name + "'");
        }
    }
    return chain;
}

} // namespace advlab
