#include "mstx/editing.hpp"

#include "mstx/kinematics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace mstx {

namespace {

Tensor lerp_one(const Tensor& a, const Tensor& b, float t) {
    if (t == 0.f) return a;
    if (t == 1.f) return b;
    return ops::add(ops::mul_scalar(a, 1.f - t), ops::mul_scalar(b, t));
}

} // namespace

TransferCodes lerp_codes(const TransferCodes& a, const TransferCodes& b, CodeKind kind,
                         float t) {
    TransferCodes out = a;
    switch (kind) {
    case CodeKind::style: out.z_s = lerp_one(a.z_s, b.z_s, t); break;
    case CodeKind::contact: out.z_ct = lerp_one(a.z_ct, b.z_ct, t); break;
    case CodeKind::trajectory: out.z_tj = lerp_one(a.z_tj, b.z_tj, t); break;
    }
    return out;
}

TransferOutput interp_factor(const TransferModel& model, const ManifoldModel& man,
                             CodeKind kind, const Tensor& xa_std, const Tensor& xb_std,
                             float t) {
    if (t < 0.f || t > 1.f) throw Error("interp factor outside [0,1]");
    TransferCodes ca = model.codes(xa_std, xa_std, xa_std);
    TransferCodes cb = model.codes(xb_std, xb_std, xb_std);
    return model.generate_codes(man, lerp_codes(ca, cb, kind, t));
}

MotionClip scale_hip(const ManifoldModel& man, const Tensor& z, const Tensor& h_std,
                     float s) {
    if (s <= 0.f) throw Error("hip scale must be positive");
    Tensor h = h_std;
    if (s != 1.f) {
        Tensor mean_h = man.norm.mean_tensor(feat::kHipBase, 3);
        Tensor std_h = man.norm.stdev_tensor(feat::kHipBase, 3);
        Tensor raw = ops::row_add(ops::row_mul(h_std, std_h), mean_h);
        raw = ops::mul_scalar(raw, s);
        Tensor inv_std({3}, {1.f / std::max(man.norm.stdev[size_t(feat::kHipBase)], 1e-6f),
                             1.f / std::max(man.norm.stdev[size_t(feat::kHipBase) + 1], 1e-6f),
                             1.f / std::max(man.norm.stdev[size_t(feat::kHipBase) + 2], 1e-6f)});
        h = ops::row_mul(ops::row_add(raw, ops::mul_scalar(mean_h, -1.f)), inv_std);
    }
    return features_to_clip(man, man.decode(z, h));
}

MotionClip replace_hip(const ManifoldModel& man, const Tensor& z, const Tensor& h_new_raw) {
    if (h_new_raw.ndim() != 2 || h_new_raw.dim(0) != 3 || h_new_raw.dim(1) != man.window)
        throw Error("replace_hip: hip sequence must be (3," + std::to_string(man.window) +
                    "), got " + shape_str(h_new_raw.shape()));
    Tensor mean_h = man.norm.mean_tensor(feat::kHipBase, 3);
    Tensor inv_std({3}, {1.f / std::max(man.norm.stdev[size_t(feat::kHipBase)], 1e-6f),
                         1.f / std::max(man.norm.stdev[size_t(feat::kHipBase) + 1], 1e-6f),
                         1.f / std::max(man.norm.stdev[size_t(feat::kHipBase) + 2], 1e-6f)});
    Tensor h_std = ops::row_mul(ops::row_add(h_new_raw, ops::mul_scalar(mean_h, -1.f)), inv_std);
    return features_to_clip(man, man.decode(z, h_std));
}

ContactOptimResult optimize_contact(const FDeltaModel& fdelta, const Tensor& h_raw,
                                    const ContactSeq& target,
                                    const ContactOptimConfig& cfg) {
    if (h_raw.ndim() != 2 || h_raw.dim(0) != 3)
        throw ShapeError("optimize_contact: expected (3,T) hip velocity");
    const int T = h_raw.dim(1);
    if (target.frames() != T) throw Error("optimize_contact: contact length mismatch");
    if (T < fdelta.receptive_field())
        throw Error("optimize_contact: sequence shorter than the f_delta receptive field");

    std::vector<float> tv(static_cast<size_t>(2 * T));
    for (int t = 0; t < T; ++t) {
        tv[size_t(t)] = target.c[size_t(t)][0];
        tv[size_t(T + t)] = target.c[size_t(t)][1];
    }
    Tensor target_t({2, T}, std::move(tv));
    Tensor ref_proj = ops::integrate_xz(h_raw, 0.f, 0.f, 0.f, kHeadingGain, kHeadingSpeedGate);
    Tensor h0 = Tensor(h_raw.shape(), h_raw.vec());

    Tensor hp = Tensor::param(h_raw.shape(), h_raw.vec());
    nn::Adam opt(cfg.lr);
    opt.add(hp);

    auto objective = [&]() {
        Tensor pr = ops::integrate_xz(hp, 0.f, 0.f, 0.f, kHeadingGain, kHeadingSpeedGate);
        Tensor obj = ops::add(ops::mul_scalar(ops::sum_sq(pr, ref_proj), cfg.lambda),
                              ops::sum_sq(fdelta.forward(hp), target_t));
        return ops::add(obj, ops::mul_scalar(ops::sum_sq(hp, h0), cfg.sigma));
    };

    ContactOptimResult res;
    res.initial = objective().item();
    if (!std::isfinite(res.initial)) throw Error("contact optimization diverged");
    res.final = res.initial;
    std::vector<float> best = hp.vec();
    int stall = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        float value;
        {
            Tape tape;
            Tensor obj = objective();
            value = obj.item();
            if (!std::isfinite(value)) throw Error("contact optimization diverged");
            tape.backward(obj);
        }
        if (value < res.final) {
            const float gain = (res.final - value) / std::max(res.final, 1e-12f);
            res.final = value;
            best = hp.vec();
            stall = gain < cfg.early_stop_rel ? stall + 1 : 0;
        } else {
            ++stall;
        }
        ++res.steps_run;
        if (stall >= cfg.patience) break;
        if (!opt.step()) throw Error("contact optimization diverged");
    }
    res.h = Tensor(h_raw.shape(), std::move(best));
    return res;
}

ContactSeq contacts_from_runs(int frames, const std::vector<std::array<int, 3>>& runs) {
    if (frames <= 0) throw Error("contacts_from_runs: empty sequence");
    ContactSeq c;
    c.c.assign(size_t(frames), {0.f, 0.f});
    for (const auto& [foot, start, end] : runs) {
        if (foot != 0 && foot != 1)
            throw Error("contact run: foot must be 0 (left) or 1 (right)");
        if (start < 0 || end > frames || start >= end)
            throw Error("contact run [" + std::to_string(start) + "," + std::to_string(end) +
                        ") outside clip of " + std::to_string(frames) + " frames");
        for (int t = start; t < end; ++t) c.c[size_t(t)][size_t(foot)] = 1.f;
    }
    return c;
}

EditSpec parse_edit_spec(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("edit spec: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("edit spec: expected a JSON object");
    if (!j.contains("op") || !j["op"].is_string())
        throw ParseError("edit spec: missing string field 'op'");

    EditSpec spec;
    spec.op = j["op"].get<std::string>();

    std::set<std::string> required, optional;
    if (spec.op == "interp_style" || spec.op == "interp_contact" ||
        spec.op == "interp_trajectory") {
        required = {"op", "a", "b", "factor"};
    } else if (spec.op == "scale_hip") {
        required = {"op", "style", "content", "scale"};
    } else if (spec.op == "replace_hip") {
        required = {"op", "style", "content", "hip"};
    } else if (spec.op == "optimize_contact") {
        required = {"op", "hip", "desired"};
        optional = {"lambda", "sigma"};
    } else {
        throw ParseError("edit spec: unknown op '" + spec.op + "'");
    }

    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!required.count(key) && !optional.count(key))
            throw ParseError("edit spec: key '" + key + "' not allowed for op " + spec.op);
    }
    for (const auto& key : required)
        if (!j.contains(key))
            throw ParseError("edit spec: op " + spec.op + " requires key '" + key + "'");

    auto str = [&](const char* k) { return j[k].get<std::string>(); };
    auto num = [&](const char* k) {
        if (!j[k].is_number()) throw ParseError(std::string("edit spec: '") + k + "' must be a number");
        return j[k].get<float>();
    };

    if (required.count("a")) spec.a = str("a");
    if (required.count("b")) spec.b = str("b");
    if (required.count("style")) spec.style = str("style");
    if (required.count("content")) spec.content = str("content");
    if (required.count("hip")) spec.hip = str("hip");
    if (required.count("factor")) {
        spec.factor = num("factor");
        if (spec.factor < 0.f || spec.factor > 1.f)
            throw ParseError("edit spec: factor must lie in [0,1]");
    }
    if (required.count("scale")) {
        spec.scale = num("scale");
        if (spec.scale <= 0.f) throw ParseError("edit spec: scale must be positive");
    }
    if (required.count("desired")) {
        if (!j["desired"].is_array()) throw ParseError("edit spec: 'desired' must be an array");
        for (const auto& run : j["desired"]) {
            if (!run.is_array() || run.size() != 3)
                throw ParseError("edit spec: each desired run is [foot, start, end]");
            spec.desired.push_back({run[0].get<int>(), run[1].get<int>(), run[2].get<int>()});
        }
    }
    if (j.contains("lambda")) {
        spec.lambda = num("lambda");
        if (spec.lambda < 0.f) throw ParseError("edit spec: lambda must be >= 0");
    }
    if (j.contains("sigma")) {
        spec.sigma = num("sigma");
        if (spec.sigma < 0.f) throw ParseError("edit spec: sigma must be >= 0");
    }
    return spec;
}

} // namespace mstx
