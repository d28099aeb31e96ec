#include "svdkl/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace svdkl {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'D', 'K', 'L', 'C', 'K', '1'};
constexpr int kVersion = 1;

void put_doubles(std::ostream& out, const double* data, std::size_t count) {
  // Little-endian on every supported target; doubles are written bit-exact.
  out.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(double)));
}

void get_doubles(std::istream& in, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), std::streamsize(count * sizeof(double)));
  if (std::size_t(in.gcount()) != count * sizeof(double)) {
    throw DataError("checkpoint truncated while reading parameters");
  }
}

void put_vector(std::ostream& out, const Vector& v) { put_doubles(out, v.data(), std::size_t(v.size())); }

Vector get_vector(std::istream& in, Index n) {
  Vector v(n);
  get_doubles(in, v.data(), std::size_t(n));
  return v;
}

nlohmann::json grid_to_json(const InducingGrid& grid) {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& g : grid.dims) dims.push_back({{"lo", g.lo}, {"hi", g.hi}, {"m", g.m}});
  return dims;
}

InducingGrid grid_from_json(const nlohmann::json& dims) {
  InducingGrid grid;
  for (const auto& d : dims) {
    grid.dims.push_back(make_grid1d(d.at("lo").get<double>(), d.at("hi").get<double>(),
                                    d.at("m").get<int>()));
  }
  return grid;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},
          {"gp_dim", c.gp_dim},
          {"grid_size", c.grid_size},
          {"minibatch", c.minibatch},
          {"samples", c.samples},
          {"epochs_pretrain", c.epochs_pretrain},
          {"epochs_gp", c.epochs_gp},
          {"epochs_joint", c.epochs_joint},
          {"lr_net", c.lr_net},
          {"lr_kernel", c.lr_kernel},
          {"lr_variational", c.lr_variational},
          {"lr_mixing", c.lr_mixing},
          {"pretrain_lr", c.pretrain_lr},
          {"pretrain_momentum", c.pretrain_momentum},
          {"optimizer", c.optimizer},
          {"seed", c.seed},
          {"grid_margin", c.grid_margin},
          {"eval_samples", c.eval_samples},
          {"threads", c.threads}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.gp_dim = j.at("gp_dim").get<int>();
  c.grid_size = j.at("grid_size").get<std::vector<int>>();
  c.minibatch = j.at("minibatch").get<int>();
  c.samples = j.at("samples").get<int>();
  c.epochs_pretrain = j.at("epochs_pretrain").get<int>();
  c.epochs_gp = j.at("epochs_gp").get<int>();
  c.epochs_joint = j.at("epochs_joint").get<int>();
  c.lr_net = j.at("lr_net").get<double>();
  c.lr_kernel = j.at("lr_kernel").get<double>();
  c.lr_variational = j.at("lr_variational").get<double>();
  c.lr_mixing = j.at("lr_mixing").get<double>();
  c.pretrain_lr = j.at("pretrain_lr").get<double>();
  c.pretrain_momentum = j.at("pretrain_momentum").get<double>();
  c.optimizer = j.at("optimizer").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.grid_margin = j.at("grid_margin").get<double>();
  c.eval_samples = j.at("eval_samples").get<int>();
  c.threads = j.at("threads").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  const DeepKernelModel& model = ckpt.model;
  nlohmann::json header;
  header["version"] = kVersion;
  header["widths"] = model.spec.widths;
  header["n_classes"] = model.n_classes;
  header["n_total"] = model.n_total;
  header["gp_ready"] = model.gp_ready;
  header["label_names"] = ckpt.label_names;
  header["rng_state"] = ckpt.rng_state;
  header["config"] = config_to_json(ckpt.config);
  header["stats_dim"] = ckpt.stats.mean.size();
  nlohmann::json gps = nlohmann::json::array();
  for (const auto& gp : model.gps) {
    gps.push_back({{"grid", grid_to_json(gp.grid)}, {"feature_subset", gp.feature_subset}});
  }
  header["gps"] = gps;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), std::streamsize(header_str.size()));

  put_vector(out, model.net.flatten());
  for (const auto& gp : model.gps) {
    put_vector(out, gp.kernel.log_lengthscale);
    put_doubles(out, &gp.kernel.log_signal_var, 1);
  }
  for (const auto& gp : model.gps) {
    put_vector(out, gp.vstate.mu);
    for (const auto& f : gp.vstate.l.factors) put_vector(out, f.flatten());
  }
  for (const auto& maps : model.squash) {
    for (const auto& s : maps) {
      const double vals[4] = {s.center, s.scale, s.out_mid, s.out_rad};
      put_doubles(out, vals, 4);
    }
  }
  if (model.gp_ready) {
    put_doubles(out, model.mixing.a.data(), std::size_t(model.mixing.a.size()));
  }
  put_vector(out, ckpt.stats.mean);
  put_vector(out, ckpt.stats.std);
  if (!out) throw DataError("write failed for '" + path + "'");
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("'" + path + "' is not a model checkpoint");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (in.gcount() != sizeof(header_len) || header_len > (1ull << 30)) {
    throw DataError("checkpoint header corrupt");
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), std::streamsize(header_len));
  if (std::uint64_t(in.gcount()) != header_len) throw DataError("checkpoint truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const int version = header.at("version").get<int>();
  if (version != kVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                    std::to_string(kVersion) + ")");
  }

  ModelCheckpoint ckpt;
  ckpt.version = version;
  ckpt.config = config_from_json(header.at("config"));
  ckpt.label_names = header.at("label_names").get<std::vector<std::string>>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();

  DeepKernelModel& model = ckpt.model;
  model.spec.widths = header.at("widths").get<std::vector<int>>();
  model.spec.validate();
  model.n_classes = header.at("n_classes").get<int>();
  model.n_total = header.at("n_total").get<Index>();
  model.gp_ready = header.at("gp_ready").get<bool>();

  // Rebuild shapes, then fill from the blobs in write order.
  Rng dummy(0);
  model.net = init_weights(model.spec, dummy);
  model.net.set_from_flat(get_vector(in, model.net.num_params()));

  for (const auto& jgp : header.at("gps")) {
    GpUnit gp;
    gp.grid = grid_from_json(jgp.at("grid"));
    gp.feature_subset = jgp.at("feature_subset").get<std::vector<int>>();
    gp.kernel.log_lengthscale = get_vector(in, gp.grid.ndims());
    get_doubles(in, &gp.kernel.log_signal_var, 1);
    model.gps.push_back(std::move(gp));
  }
  for (auto& gp : model.gps) {
    gp.vstate.mu = get_vector(in, gp.grid.total());
    std::vector<LowerTri> factors;
    for (const auto& g : gp.grid.dims) {
      LowerTri f(Matrix::Zero(g.m, g.m));
      f.set_from_flat(get_vector(in, f.num_params()));
      factors.push_back(std::move(f));
    }
    gp.vstate.l = KroneckerLower(std::move(factors));
  }
  for (const auto& gp : model.gps) {
    std::vector<SquashMap> maps;
    for (int d = 0; d < gp.grid.ndims(); ++d) {
      double vals[4];
      get_doubles(in, vals, 4);
      maps.push_back(SquashMap{vals[0], vals[1], vals[2], vals[3]});
    }
    model.squash.push_back(std::move(maps));
  }
  if (model.gp_ready) {
    model.mixing.a.resize(model.n_classes, int(model.gps.size()));
    get_doubles(in, model.mixing.a.data(), std::size_t(model.mixing.a.size()));
  }
  const Index stats_dim = header.at("stats_dim").get<Index>();
  ckpt.stats.mean = get_vector(in, stats_dim);
  ckpt.stats.std = get_vector(in, stats_dim);
  return ckpt;
}

}  // namespace svdkl
