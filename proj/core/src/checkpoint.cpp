#include "imml/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "imml/errors.hpp"

namespace imml {

namespace {

constexpr char kMagic[8] = {'I', 'M', 'M', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct Header {
    Task task = Task::regression;
    ModelKind kind = ModelKind::m;
    std::uint32_t m1 = 0, m2 = 0, d1 = 0, d2 = 0, n_layers = 0, n_heads = 0;
    std::uint32_t d_sph = 0, n_out = 0, mlp_hidden = 0;
    double dropout = 0.0, eta = 0.0;
};

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }
void put_u32(std::ostream& out, std::uint32_t v) { put_bytes(out, &v, 4); }
void put_f64(std::ostream& out, double v) { put_bytes(out, &v, 8); }

void get_bytes(std::istream& in, void* p, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw ParseError(path + ": truncated checkpoint");
}
std::uint8_t get_u8(std::istream& in, const std::string& path) {
    std::uint8_t v;
    get_bytes(in, &v, 1, path);
    return v;
}
std::uint32_t get_u32(std::istream& in, const std::string& path) {
    std::uint32_t v;
    get_bytes(in, &v, 4, path);
    return v;
}
double get_f64(std::istream& in, const std::string& path) {
    double v;
    get_bytes(in, &v, 8, path);
    return v;
}

void write_header(std::ostream& out, const Header& h) {
    put_bytes(out, kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u8(out, h.task == Task::classification ? 1 : 0);
    put_u8(out, static_cast<std::uint8_t>(h.kind));
    for (std::uint32_t v : {h.m1, h.m2, h.d1, h.d2, h.n_layers, h.n_heads, h.d_sph, h.n_out,
                            h.mlp_hidden})
        put_u32(out, v);
    put_f64(out, h.dropout);
    put_f64(out, h.eta);
}

void write_params(std::ostream& out, const NamedParams& params) {
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        put_bytes(out, name.data(), name.size());
        put_u32(out, static_cast<std::uint32_t>(t.ndim()));
        for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        const std::vector<double>& v = t.values();
        put_bytes(out, v.data(), v.size() * sizeof(double));
    }
}

void save_file(const std::string& path, const Header& h, const NamedParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_header(out, h);
    write_params(out, params);
    if (!out) throw IoError("write failed: " + path);
}

void read_params_into(std::istream& in, const std::string& path, const NamedParams& expected) {
    std::uint32_t count = get_u32(in, path);
    if (count != expected.size())
        throw ParseError(path + ": parameter count mismatch");
    for (const auto& [name, t] : expected) {
        std::uint32_t name_len = get_u32(in, path);
        std::string file_name(name_len, '\0');
        get_bytes(in, file_name.data(), name_len, path);
        if (file_name != name)
            throw ParseError(path + ": expected parameter '" + name + "', found '" +
                             file_name + "'");
        std::uint32_t rank = get_u32(in, path);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) shape[i] = get_u32(in, path);
        if (shape != t.shape())
            throw ParseError(path + ": parameter '" + name + "' shape mismatch");
        Tensor dst = t;
        std::vector<double>& v = dst.values_mut();
        get_bytes(in, v.data(), v.size() * sizeof(double), path);
    }
}

TrainConfig config_from_header(const Header& h) {
    TrainConfig cfg;
    cfg.task = h.task;
    cfg.d1 = h.d1;
    cfg.d2 = h.d2 > 0 ? h.d2 : 1;
    cfg.n_layers = h.n_layers;
    cfg.n_heads = static_cast<int>(h.n_heads);
    cfg.dropout = h.dropout;
    cfg.d_sph = h.d_sph > 0 ? h.d_sph : 1;
    cfg.eta = h.eta > 0.0 ? h.eta : 1.0;
    cfg.mlp_hidden = h.mlp_hidden > 0 ? h.mlp_hidden : 1;
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const MModel& model, Task task) {
    Header h;
    h.task = task;
    h.kind = ModelKind::m;
    h.m1 = static_cast<std::uint32_t>(model.mri.config().n_features);
    h.m2 = static_cast<std::uint32_t>(model.gen.config().n_features);
    h.d1 = static_cast<std::uint32_t>(model.mri.config().d);
    h.d2 = static_cast<std::uint32_t>(model.gen.config().d);
    h.n_layers = static_cast<std::uint32_t>(model.mri.config().n_layers);
    h.n_heads = static_cast<std::uint32_t>(model.mri.config().n_heads);
    h.n_out = static_cast<std::uint32_t>(model.head.out_width());
    h.dropout = model.mri.config().dropout;
    save_file(path, h, model.named_params());
}

void save_checkpoint(const std::string& path, const UModel& model, Task task) {
    Header h;
    h.task = task;
    h.kind = ModelKind::u;
    h.m1 = static_cast<std::uint32_t>(model.mri.config().n_features);
    h.d1 = static_cast<std::uint32_t>(model.mri.config().d);
    h.d2 = static_cast<std::uint32_t>(model.generator.out_width());
    h.n_layers = static_cast<std::uint32_t>(model.mri.config().n_layers);
    h.n_heads = static_cast<std::uint32_t>(model.mri.config().n_heads);
    h.d_sph = static_cast<std::uint32_t>(model.disc.sphere_dim());
    h.n_out = static_cast<std::uint32_t>(model.head.out_width());
    h.dropout = model.mri.config().dropout;
    h.eta = model.disc.eta();
    save_file(path, h, model.named_params());
}

void save_checkpoint(const std::string& path, const VanillaModel& model, Task task) {
    Header h;
    h.task = task;
    h.kind = ModelKind::vanilla;
    h.m1 = static_cast<std::uint32_t>(model.mri.config().n_features);
    h.d1 = static_cast<std::uint32_t>(model.mri.config().d);
    h.n_layers = static_cast<std::uint32_t>(model.mri.config().n_layers);
    h.n_heads = static_cast<std::uint32_t>(model.mri.config().n_heads);
    h.n_out = static_cast<std::uint32_t>(model.head.out_width());
    h.dropout = model.mri.config().dropout;
    save_file(path, h, model.named_params());
}

void save_checkpoint(const std::string& path, const MlpModel& model, Task task) {
    Header h;
    h.task = task;
    h.kind = ModelKind::mlp;
    h.m1 = static_cast<std::uint32_t>(model.w1.dim(0));
    h.mlp_hidden = static_cast<std::uint32_t>(model.w1.dim(1));
    h.d1 = static_cast<std::uint32_t>(model.w2.dim(1));
    h.n_out = static_cast<std::uint32_t>(model.head.out_width());
    save_file(path, h, model.named_params());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);

    char magic[8];
    get_bytes(in, magic, sizeof(magic), path);
    if (std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw ParseError(path + ": not a model checkpoint");
    std::uint32_t version = get_u32(in, path);
    if (version != kVersion)
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));

    Header h;
    std::uint8_t task_tag = get_u8(in, path);
    if (task_tag > 1) throw ParseError(path + ": bad task tag");
    h.task = task_tag == 1 ? Task::classification : Task::regression;
    std::uint8_t kind_tag = get_u8(in, path);
    if (kind_tag > 3) throw ParseError(path + ": bad model kind tag");
    h.kind = static_cast<ModelKind>(kind_tag);
    for (std::uint32_t* v : {&h.m1, &h.m2, &h.d1, &h.d2, &h.n_layers, &h.n_heads, &h.d_sph,
                             &h.n_out, &h.mlp_hidden})
        *v = get_u32(in, path);
    h.dropout = get_f64(in, path);
    h.eta = get_f64(in, path);

    TrainConfig cfg = config_from_header(h);
    Rng root(0);
    Checkpoint ck;
    ck.task = h.task;
    ck.kind = h.kind;
    switch (h.kind) {
        case ModelKind::m:
            ck.model.emplace<MModel>(h.m1, h.m2, h.n_out, cfg, root);
            read_params_into(in, path, std::get<MModel>(ck.model).named_params());
            break;
        case ModelKind::u:
            ck.model.emplace<UModel>(h.m1, h.n_out, cfg, root);
            read_params_into(in, path, std::get<UModel>(ck.model).named_params());
            break;
        case ModelKind::vanilla:
            ck.model.emplace<VanillaModel>(h.m1, h.n_out, cfg, root);
            read_params_into(in, path, std::get<VanillaModel>(ck.model).named_params());
            break;
        case ModelKind::mlp:
            ck.model.emplace<MlpModel>(h.m1, h.n_out, cfg, root);
            read_params_into(in, path, std::get<MlpModel>(ck.model).named_params());
            break;
    }
    return ck;
}

}  // namespace imml
