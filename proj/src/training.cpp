#include "raunet/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>

#include "raunet/checkpoint.hpp"
#include "raunet/random.hpp"

namespace raunet {

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double epsilon) {
    if (pred.shape() != target.shape())
        throw ShapeError("dice_loss: prediction " + shape_str(pred.shape()) + " and target " +
                         shape_str(target.shape()) + " differ");
    const T* s = pred.data().data();
    const T* g = target.data().data();
    const std::size_t n = pred.numel();
    double inter = 0.0, ps = 0.0, gs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sv = static_cast<double>(s[i]);
        const double gv = static_cast<double>(g[i]);
        inter += sv * gv;
        ps += sv * sv;
        gs += gv * gv;
    }
    const double denom = ps + gs + epsilon;
    Tensor<T> out(Shape{1});
    out.data()[0] = static_cast<T>(1.0 - 2.0 * inter / denom);

    Tape<T>* tape = active_tape<T>();
    if (tape != nullptr && pred.requires_grad()) {
        auto pi = pred.impl();
        auto ti = target.impl();
        auto op = out.impl();
        tape->record(OpKind::DiceLoss, {pi, ti}, op, [pi, ti, op, inter, denom]() {
            const double up = static_cast<double>(op->grad[0]);
            T* gp = pi->ensure_grad().data();
            const T* sv = pi->data.data();
            const T* gv = ti->data.data();
            const double d2 = denom * denom;
            for (std::size_t i = 0; i < pi->data.size(); ++i) {
                const double d = -2.0 * (static_cast<double>(gv[i]) * denom - 2.0 * inter * static_cast<double>(sv[i])) / d2;
                gp[i] += static_cast<T>(up * d);
            }
        });
    }
    return out;
}

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& [name, t] : params_) {
        m_.emplace_back(t.numel(), T(0));
        v_.emplace_back(t.numel(), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    for (auto& [name, t] : params_) {
        if (!t.has_grad()) continue;
        for (T g : t.impl()->grad)
            if (!std::isfinite(static_cast<double>(g)))
                throw NumericError("non-finite gradient in parameter " + name + "; step rejected");
    }
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor<T>& t = params_[p].second;
        auto& impl = *t.impl();
        const bool has = t.has_grad();
        std::vector<T>& m = m_[p];
        std::vector<T>& v = v_[p];
        for (std::size_t i = 0; i < impl.data.size(); ++i) {
            const double g = has ? static_cast<double>(impl.grad[i]) : 0.0;
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
            impl.data[i] = static_cast<T>(static_cast<double>(impl.data[i]) - update);
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

PlateauSchedule::PlateauSchedule(double lr, PlateauConfig config)
    : config_(config), lr_(lr), best_(std::numeric_limits<double>::infinity()) {}

double PlateauSchedule::update(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        stagnant_ = 0;
        return lr_;
    }
    if (++stagnant_ >= config_.patience) {
        lr_ *= config_.factor;
        stagnant_ = 0;
        ++reductions_;
    }
    return lr_;
}

double plateau_schedule(const std::vector<double>& history, double initial_lr, PlateauConfig config) {
    if (history.empty()) throw std::invalid_argument("plateau_schedule: empty loss history");
    PlateauSchedule schedule(initial_lr, config);
    for (double loss : history) schedule.update(loss);
    return schedule.learning_rate();
}

FoldPlan kfold_split(const std::vector<std::string>& case_ids, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw std::invalid_argument("kfold_split: k must be positive");
    if (k > case_ids.size())
        throw std::invalid_argument("kfold_split: k=" + std::to_string(k) + " exceeds the " +
                                    std::to_string(case_ids.size()) + " available cases");
    std::vector<std::string> order = case_ids;
    std::mt19937_64 rng(seed);
    shuffle_in_place(order, rng);
    FoldPlan plan;
    plan.k = k;
    const std::size_t base = order.size() / k;
    const std::size_t extra = order.size() % k;
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        Fold fold;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i >= start && i < start + size)
                fold.validation.push_back(order[i]);
            else
                fold.train.push_back(order[i]);
        }
        plan.folds.push_back(std::move(fold));
        start += size;
    }
    return plan;
}

double evaluate_loss(Network<float>& net, const std::vector<Sample>& samples, NormMode mode) {
    if (samples.empty()) throw std::invalid_argument("evaluate_loss: no samples");
    double total = 0.0;
    for (const Sample& s : samples) {
        const Tensor<float> pred = net.forward(s.image, mode);
        total += static_cast<double>(dice_loss(pred, s.target).item());
    }
    return total / static_cast<double>(samples.size());
}

TrainResult train_network(Network<float>& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
                          const TrainConfig& config) {
    if (train.empty() && config.epochs > 0) throw std::invalid_argument("train_network: no training samples");
    auto params = net.parameters();
    for (auto& [name, t] : params) t.set_requires_grad(true);
    Adam<float> adam(params, config.adam);
    PlateauSchedule schedule(config.adam.lr, config.plateau);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::vector<Sample>& scoring = val.empty() ? train : val;

    TrainResult result;
    Checkpoint best = snapshot(net);
    result.best_val_loss = std::numeric_limits<double>::infinity();
    const std::size_t steps = config.steps_per_epoch > 0 ? config.steps_per_epoch : train.size();
    std::size_t cursor = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = adam.learning_rate();
        double total = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            if (cursor == 0) shuffle_in_place(order, rng);
            const Sample& sample = train[order[cursor]];
            cursor = (cursor + 1) % order.size();

            Tape<float> tape;
            double value;
            {
                TapeScope<float> scope(tape);
                const Tensor<float> pred = net.forward(sample.image, NormMode::Train);
                const Tensor<float> loss = dice_loss(pred, sample.target);
                value = static_cast<double>(loss.item());
                if (!std::isfinite(value))
                    throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(s + 1));
                tape.backward(loss);
            }
            adam.step();
            adam.zero_grad();
            ++result.steps;
            total += value;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.lr = lr;
        record.train_loss = total / static_cast<double>(steps);
        record.val_loss = evaluate_loss(net, scoring, config.eval_norm);
        if (!std::isfinite(record.val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        if (record.val_loss < result.best_val_loss) {
            result.best_val_loss = record.val_loss;
            result.best_epoch = epoch;
            best = snapshot(net);
        }
        adam.set_learning_rate(schedule.update(record.val_loss));
        result.curve.push_back(record);
        if (config.verbose)
            std::fprintf(stderr, "epoch %zu train %.6f val %.6f lr %g\n", epoch, record.train_loss, record.val_loss,
                         lr);
    }
    for (auto& [name, t] : params) {
        t.set_requires_grad(false);
        t.impl()->grad.clear();
    }
    restore(net, best);
    if (result.best_epoch == 0) result.best_val_loss = 0.0;
    if (!config.checkpoint_path.empty()) write_checkpoint(config.checkpoint_path, best);
    if (!config.loss_csv_path.empty()) write_loss_csv(config.loss_csv_path, result.curve);
    return result;
}

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write loss curve: " + path);
    out << "epoch,train_loss,val_loss\n";
    char line[96];
    for (const EpochRecord& r : curve) {
        std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_loss);
        out << line;
    }
}

template Tensor<float> dice_loss(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> dice_loss(const Tensor<double>&, const Tensor<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace raunet
