#include "metal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "metal/errors.hpp"
#include "metal/losses.hpp"

namespace metal {

int early_stop_epoch(const std::vector<double>& val_losses, int max_epochs, int start_after,
                     int patience) {
    double best = std::numeric_limits<double>::infinity();
    int since_improvement = 0;
    int epochs = std::min<int>(max_epochs, static_cast<int>(val_losses.size()));
    for (int e = 1; e <= epochs; ++e) {
        double v = val_losses[e - 1];
        if (v < best) {
            best = v;
            since_improvement = 0;
        } else {
            ++since_improvement;
        }
        if (e > start_after && since_improvement >= patience) return e;
    }
    return epochs;
}

void Adam::step(ParamStore<float>& params, double lr, double weight_decay) {
    const auto& all = params.all();
    if (m_.empty()) {
        for (const auto& p : all) {
            m_.emplace_back(p->value.rows, p->value.cols);
            v_.emplace_back(p->value.rows, p->value.cols);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < all.size(); ++i) {
        Param<float>& p = *all[i];
        for (size_t k = 0; k < p.value.size(); ++k) {
            double g = p.grad.a[k];
            if (weight_decay > 0) g += weight_decay * p.value.a[k];
            double m = beta1_ * m_[i].a[k] + (1.0 - beta1_) * g;
            double v = beta2_ * v_[i].a[k] + (1.0 - beta2_) * g * g;
            m_[i].a[k] = static_cast<float>(m);
            v_[i].a[k] = static_cast<float>(v);
            double update = (m / bc1) / (std::sqrt(v / bc2) + eps_);
            p.value.a[k] -= static_cast<float>(lr * update);
        }
    }
}

namespace {

void sgd_step(ParamStore<float>& params, double lr, double weight_decay) {
    for (const auto& p : params.all())
        for (size_t k = 0; k < p->value.size(); ++k) {
            double g = p->grad.a[k];
            if (weight_decay > 0) g += weight_decay * p->value.a[k];
            p->value.a[k] -= static_cast<float>(lr * g);
        }
}

double grad_norm(const ParamStore<float>& params) {
    double s = 0;
    for (const auto& p : params.all())
        for (float g : p->grad.a) s += double(g) * g;
    return std::sqrt(s);
}

void scale_grads(ParamStore<float>& params, double factor) {
    for (const auto& p : params.all())
        for (auto& g : p->grad.a) g = static_cast<float>(g * factor);
}

double image_loss(MetalModel<float>& model, const ImageTensor& img, const SsimParams& sp,
                  LossReduction red, bool with_grad) {
    Tape<float> tape(with_grad);
    auto fwd = model.forward(img, tape);
    Var<float> target = tape.constant(image_to_stacked<float>(img));
    Var<float> loss = total_loss(fwd.recon, target, sp, kImageChannels, red);
    double value = loss.val()(0, 0);
    if (with_grad) tape.backward(loss);
    return value;
}

std::vector<Mat<float>> snapshot(const ParamStore<float>& params) {
    std::vector<Mat<float>> out;
    for (const auto& p : params.all()) out.push_back(p->value);
    return out;
}

void restore(ParamStore<float>& params, const std::vector<Mat<float>>& snap) {
    const auto& all = params.all();
    for (size_t i = 0; i < all.size(); ++i) all[i]->value = snap[i];
}

}  // namespace

TrainResult train(MetalModel<float>& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const Config& cfg, bool verbose) {
    if (train_set.empty() || val_set.empty())
        throw DataError("train: empty train or validation set");

    SsimParams sp;
    sp.mode = cfg.ssim_mode;
    LossReduction red = cfg.l1_reduction == "mean" ? LossReduction::Mean : LossReduction::Sum;

    std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(cfg.seed >> 32),
                      0x51ed270bu};
    std::mt19937 shuffle_rng(seq);

    Adam adam;
    TrainResult res;
    double best = std::numeric_limits<double>::infinity();
    int since_improvement = 0;
    std::vector<Mat<float>> best_params = snapshot(model.params());
    res.best_epoch = 0;

    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double train_loss_sum = 0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch) {
            size_t end = std::min(order.size(), start + cfg.batch);
            model.params().zero_grads();
            double batch_loss = 0;
            for (size_t i = start; i < end; ++i) {
                try {
                    batch_loss += image_loss(model, train_set[order[i]].image, sp, red, true);
                } catch (const MaskedSoftmaxError& e) {
                    // exploded activations surface as all-masked softmax rows
                    throw DivergenceError("numeric blow-up at epoch " + std::to_string(epoch) +
                                          ", sample " + std::to_string(i) + ": " + e.what() +
                                          " (lr=" + std::to_string(cfg.lr) +
                                          ", best_val=" + std::to_string(best) + ")");
                }
            }
            const size_t m = end - start;
            batch_loss /= double(m);
            if (!std::isfinite(batch_loss))
                throw DivergenceError("non-finite training loss at epoch " +
                                      std::to_string(epoch) + ", batch starting at sample " +
                                      std::to_string(start) + " (lr=" + std::to_string(cfg.lr) +
                                      ", best_val=" + std::to_string(best) + ")");
            scale_grads(model.params(), 1.0 / double(m));
            if (cfg.grad_clip > 0) {
                double norm = grad_norm(model.params());
                if (norm > cfg.grad_clip) scale_grads(model.params(), cfg.grad_clip / norm);
            }
            if (cfg.optimizer == OptimizerKind::Adam)
                adam.step(model.params(), cfg.lr, cfg.weight_decay);
            else
                sgd_step(model.params(), cfg.lr, cfg.weight_decay);
            train_loss_sum += batch_loss * double(m);
            seen += m;
        }

        double val_loss = 0;
        try {
            for (const auto& s : val_set) val_loss += image_loss(model, s.image, sp, red, false);
        } catch (const MaskedSoftmaxError& e) {
            throw DivergenceError("numeric blow-up during validation at epoch " +
                                  std::to_string(epoch) + ": " + e.what() +
                                  " (lr=" + std::to_string(cfg.lr) +
                                  ", best_val=" + std::to_string(best) + ")");
        }
        val_loss /= double(val_set.size());
        if (!std::isfinite(val_loss))
            throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));

        auto t1 = std::chrono::steady_clock::now();
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = train_loss_sum / double(seen);
        st.val_loss = val_loss;
        st.lr = cfg.lr;
        st.seconds = std::chrono::duration<double>(t1 - t0).count();
        res.history.push_back(st);

        if (val_loss < best) {
            best = val_loss;
            since_improvement = 0;
            best_params = snapshot(model.params());
            res.best_epoch = epoch;
        } else {
            ++since_improvement;
        }
        if (verbose && (epoch % 25 == 0 || epoch == 1))
            std::cerr << "epoch " << epoch << " train " << st.train_loss << " val " << val_loss
                      << "\n";

        res.stopped_epoch = epoch;
        if (epoch > cfg.early_stop_start_epoch && since_improvement >= cfg.patience) break;
    }

    restore(model.params(), best_params);
    res.best_val_loss = best;
    return res;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write history: " + path);
    os << "epoch,train_loss,val_loss,lr,seconds\n";
    char buf[160];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.3f\n", h.epoch, h.train_loss,
                      h.val_loss, h.lr, h.seconds);
        os << buf;
    }
}

}  // namespace metal
