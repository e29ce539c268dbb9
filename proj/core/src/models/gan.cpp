#include "cyclesense/models/gan.hpp"

#include <cmath>

namespace cyclesense {

using nn::Var;

void GanConfig::validate() const {
  if (latent == 0 || generator_width == 0 || discriminator_width == 0 || batch_size == 0) {
    throw std::invalid_argument("gan widths and batch size must be positive");
  }
  if (!(gap_fraction > 0.0 && gap_fraction < 1.0)) throw std::invalid_argument("gap_fraction must lie in (0, 1)");
}

namespace {

nn::ConvBlockConfig temporal(std::size_t filters, bool batch_norm, bool relu) {
  nn::ConvBlockConfig c;
  c.kernel = {1, 1, 3};
  c.padding = nn::Padding::Same;
  c.filters = filters;
  c.dropout = 0.0;
  c.batch_norm = batch_norm;
  c.relu = relu;
  return c;
}

nn::AdamConfig adam(const GanConfig& c) {
  nn::AdamConfig a;
  a.lr = c.lr;
  a.beta1 = c.beta1;
  return a;
}

}  // namespace

Gan::Gan(FrequencySpec spec, GanConfig config, std::uint64_t seed)
    : spec_(spec), config_(config), gen_opt_({}), disc_opt_({}) {
  spec_.validate();
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t t = spec_.windows();
  gen_project_ = nn::Dense<float>::create(gen_params_, "gen.project", config_.latent, t * config_.generator_width, rng);
  gen_conv_ = nn::ConvBlock<float>::create(gen_params_, "gen.conv", config_.generator_width,
                                           temporal(config_.generator_width, true, true), rng);
  gen_out_ = nn::ConvBlock<float>::create(gen_params_, "gen.out", config_.generator_width,
                                          temporal(features(), false, false), rng);
  disc_conv_ = nn::ConvBlock<float>::create(disc_params_, "disc.conv", features(),
                                            temporal(config_.discriminator_width, false, true), rng);
  disc_out_ = nn::Dense<float>::create(disc_params_, "disc.head", t * config_.discriminator_width, 1, rng);
  for (auto& w : disc_out_.weight->value.values()) w *= 0.01f;
  gen_opt_ = nn::Adam<float>(gen_params_.all(), adam(config_));
  disc_opt_ = nn::Adam<float>(disc_params_.all(), adam(config_));
}

Gan::Output Gan::generate(nn::Tape<float>& tape, const nn::Tensor<float>& z, bool training) const {
  const std::size_t b = z.dim(0);
  const std::size_t t = spec_.windows();
  const std::size_t f = spec_.f;
  Var<float> h = nn::reshape(gen_project_(tape, tape.constant(z)), {b, 1, 1, t, config_.generator_width});
  h = gen_out_(tape, gen_conv_(tape, h, training), training);
  Var<float> seq = nn::reshape(h, {b, t, features()});
  const auto spectral = [&](std::size_t begin) {
    Var<float> s = nn::reshape(nn::slice(seq, 2, begin, begin + 6 * f), {b, t, 3, f, 2});
    return nn::permute(s, {0, 2, 3, 1, 4});
  };
  Var<float> gps = nn::permute(nn::slice(seq, 2, 12 * f, 12 * f + 2), {0, 2, 1});
  return {spectral(0), spectral(6 * f), nn::reshape(gps, {b, 2, 1, t, 1})};
}

Var<float> Gan::discriminate(nn::Tape<float>& tape, Var<float> accel, Var<float> gyro, Var<float> gps) const {
  const std::size_t b = accel.dim(0);
  const std::size_t t = spec_.windows();
  const std::size_t f = spec_.f;
  const auto flat = [&](Var<float> x) { return nn::reshape(nn::permute(x, {0, 3, 1, 2, 4}), {b, t, 6 * f}); };
  Var<float> g = nn::permute(nn::reshape(gps, {b, 2, t}), {0, 2, 1});
  Var<float> seq = nn::reshape(nn::concat<float>({flat(accel), flat(gyro), g}, 2), {b, 1, 1, t, features()});
  Var<float> h = disc_conv_(tape, seq, false);
  return nn::sigmoid(disc_out_(tape, nn::reshape(h, {b, t * config_.discriminator_width})));
}

nn::Tensor<float> Gan::sample_latent(std::size_t n, std::mt19937_64& rng) const {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  nn::Tensor<float> z({n, config_.latent});
  for (auto& v : z.values()) v = normal(rng);
  return z;
}

Gan::StepLosses Gan::train_step(const TensorBatch& real, std::mt19937_64& rng) {
  const std::size_t n = real.size();
  StepLosses losses;
  const std::vector<float> ones(n, 1.0f);
  const std::vector<float> zeros(n, 0.0f);
  {
    nn::Tape<float> tape(rng());
    const Output fake = generate(tape, sample_latent(n, rng), true);
    Var<float> d_fake = discriminate(tape, tape.constant(fake.accel.value()), tape.constant(fake.gyro.value()),
                                     tape.constant(fake.gps.value()));
    Var<float> d_real =
        discriminate(tape, tape.constant(real.accel), tape.constant(real.gyro), tape.constant(real.gps));
    Var<float> loss_real = nn::bce_loss_weighted(d_real, std::span<const float>(ones), 1.0, 1.0);
    Var<float> loss_fake = nn::bce_loss_weighted(d_fake, std::span<const float>(zeros), 1.0, 1.0);
    losses.discriminator_real = loss_real.value()[0];
    losses.discriminator_fake = loss_fake.value()[0];
    disc_opt_.zero_grad();
    tape.backward(nn::add(loss_real, loss_fake));
    disc_opt_.step();
  }
  {
    nn::Tape<float> tape(rng());
    const Output fake = generate(tape, sample_latent(n, rng), true);
    Var<float> loss = nn::bce_loss_weighted(discriminate(tape, fake.accel, fake.gyro, fake.gps),
                                            std::span<const float>(ones), 1.0, 1.0);
    losses.generator = loss.value()[0];
    gen_opt_.zero_grad();
    disc_opt_.zero_grad();
    tape.backward(loss);
    gen_opt_.step();
    disc_opt_.zero_grad();
  }
  return losses;
}

std::vector<Gan::StepLosses> train_gan(Gan& gan, const TensorDataset& data, std::uint64_t seed) {
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == 1) positives.push_back(i);
  }
  if (positives.empty()) throw NoPositives("cannot train the generator without positive buckets");
  std::mt19937_64 rng(seed);
  std::vector<Gan::StepLosses> history;
  std::vector<std::size_t> batch(std::min(gan.config().batch_size, positives.size()));
  for (std::size_t step = 0; step < gan.config().steps; ++step) {
    for (auto& i : batch) i = positives[rng() % positives.size()];
    history.push_back(gan.train_step(make_batch(data, batch), rng));
  }
  return history;
}

std::vector<SensorTensorSet> gan_generate(const Gan& gan, std::size_t n, std::uint64_t seed) {
  std::vector<SensorTensorSet> out;
  if (n == 0) return out;
  std::mt19937_64 rng(seed);
  nn::Tape<float> tape(seed);
  const auto fake = gan.generate(tape, gan.sample_latent(n, rng), false);
  const FrequencySpec& spec = gan.spec();
  const nn::Shape a_shape = accel_shape(spec);
  const nn::Shape g_shape = gps_shape(spec);
  const std::size_t a_size = nn::numel(a_shape);
  const std::size_t g_size = nn::numel(g_shape);
  for (std::size_t i = 0; i < n; ++i) {
    const auto piece = [&](const nn::Tensor<float>& t, std::size_t size, const nn::Shape& shape) {
      const auto* begin = t.data() + i * size;
      return nn::Tensor<float>(shape, std::vector<float>(begin, begin + size));
    };
    out.push_back({piece(fake.accel.value(), a_size, a_shape), piece(fake.gyro.value(), a_size, a_shape),
                   piece(fake.gps.value(), g_size, g_shape)});
  }
  return out;
}

std::size_t augmentation_count(std::size_t n_pos, std::size_t n_neg, double gap_fraction) {
  if (n_neg <= n_pos) return 0;
  // A product within rounding error of an integer counts as that integer.
  const double gap = static_cast<double>(n_neg - n_pos);
  const double product = gap_fraction * gap;
  auto count = static_cast<std::size_t>(std::floor(product));
  if (std::abs(product - std::round(product)) < 1e-9 * std::max(1.0, gap)) {
    count = static_cast<std::size_t>(std::round(product));
  }
  return count;
}

std::size_t augment_dataset(TensorDataset& data, const Gan& gan, std::uint64_t seed) {
  if (data.split != "train") {
    throw std::invalid_argument("augmentation is only allowed on the training split, got '" + data.split + "'");
  }
  const std::size_t n_pos = data.positives();
  if (n_pos == 0) throw NoPositives("training split has no positive buckets");
  if (data.spec.f != gan.spec().f) throw nn::ShapeMismatch("generator and dataset frequency specs differ");
  const std::size_t n = augmentation_count(n_pos, data.size() - n_pos, gan.config().gap_fraction);
  auto synthetic = gan_generate(gan, n, seed);
  for (std::size_t i = 0; i < n; ++i) {
    data.items.push_back(std::move(synthetic[i]));
    data.labels.push_back(1);
    data.ride_ids.push_back("synthetic");
    data.bucket_indices.push_back(static_cast<std::uint32_t>(i));
  }
  return n;
}

}  // namespace cyclesense
