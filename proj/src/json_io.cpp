#include "refield/json_io.hpp"

#include "refield/error.hpp"

#include <algorithm>
#include <fstream>

namespace refield {

namespace {

Json vec_to_json(const Eigen::VectorXd& v)
{
    return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vec_from_json(const Json& j, const std::string& what)
{
    if (!j.is_array()) {
        throw DataError(what + " must be an array");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw DataError(what + " must contain numbers");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

const Json& field(const Json& j, const char* key, const std::string& context)
{
    if (!j.is_object() || !j.contains(key)) {
        throw DataError(context + ": missing '" + key + "'");
    }
    return j.at(key);
}

Eigen::Vector3d vec3_from_json(const Json& j, const std::string& what)
{
    const Eigen::VectorXd v = vec_from_json(j, what);
    if (v.size() != 3) {
        throw DataError(what + " must have 3 entries");
    }
    return v;
}

} // namespace

Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& value)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << value.dump(2) << '\n';
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

void reject_unknown_keys(const Json& object, std::initializer_list<const char*> allowed, const std::string& context)
{
    if (!object.is_object()) {
        throw DataError(context + " must be a JSON object");
    }
    for (const auto& item : object.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
        if (!known) {
            throw DataError(context + ": unknown key '" + item.key() + "'");
        }
    }
}

Json face_params_to_json(const FaceParams& p)
{
    return Json{{"alpha", vec_to_json(p.alpha)},
                {"beta", vec_to_json(p.beta)},
                {"rotation", {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()}},
                {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

FaceParams face_params_from_json(const Json& j, const MorphableModel* model)
{
    const std::string ctx = "face parameters";
    reject_unknown_keys(j, {"alpha", "beta", "rotation", "translation"}, ctx);
    FaceParams p;
    p.alpha = vec_from_json(field(j, "alpha", ctx), "alpha");
    p.beta = vec_from_json(field(j, "beta", ctx), "beta");
    const Eigen::VectorXd q = vec_from_json(field(j, "rotation", ctx), "rotation");
    if (q.size() != 4 || !(q.norm() > 0.0)) {
        throw DataError("rotation must be a non-zero quaternion [w, x, y, z]");
    }
    p.rotation = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized();
    p.translation = vec3_from_json(field(j, "translation", ctx), "translation");
    if (model) {
        if (p.alpha.size() != model->identity_dims() || p.beta.size() != model->expression_dims()) {
            throw DimensionError("face parameters have " + std::to_string(p.alpha.size()) + "/" +
                                 std::to_string(p.beta.size()) + " coefficients, the model expects " +
                                 std::to_string(model->identity_dims()) + "/" + std::to_string(model->expression_dims()));
        }
    }
    return p;
}

Json camera_to_json(const Camera& c)
{
    return Json{{"focal", c.focal},
                {"principal_point", {c.principal_point.x(), c.principal_point.y()}},
                {"width", c.width},
                {"height", c.height}};
}

Camera camera_from_json(const Json& j)
{
    const std::string ctx = "camera";
    reject_unknown_keys(j, {"focal", "principal_point", "width", "height"}, ctx);
    Camera c;
    c.focal = field(j, "focal", ctx).get<double>();
    const Eigen::VectorXd pp = vec_from_json(field(j, "principal_point", ctx), "principal_point");
    if (pp.size() != 2) {
        throw DataError("principal_point must have 2 entries");
    }
    c.principal_point = pp;
    c.width = field(j, "width", ctx).get<int>();
    c.height = field(j, "height", ctx).get<int>();
    c.validate();
    return c;
}

Json rig_to_json(const LightRig& rig)
{
    Json dirs = Json::array();
    for (const auto& d : rig.directions) {
        dirs.push_back({d.x(), d.y(), d.z()});
    }
    return Json{{"directions", dirs}, {"intensities", rig.intensities}};
}

LightRig rig_from_json(const Json& j)
{
    const std::string ctx = "light rig";
    reject_unknown_keys(j, {"directions", "intensities"}, ctx);
    LightRig rig;
    for (const Json& d : field(j, "directions", ctx)) {
        rig.directions.push_back(vec3_from_json(d, "light direction"));
    }
    const Eigen::VectorXd intensities = vec_from_json(field(j, "intensities", ctx), "intensities");
    rig.intensities.assign(intensities.data(), intensities.data() + intensities.size());
    rig.validate();
    return rig;
}

Json light_weights_to_json(const LightWeights& lambda, const LightRig& rig)
{
    if (static_cast<std::size_t>(lambda.rows()) != rig.size()) {
        throw DimensionError("light weight count does not match the rig");
    }
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < lambda.rows(); ++i) {
        rows.push_back({lambda(i, 0), lambda(i, 1), lambda(i, 2)});
    }
    return Json{{"rig", rig_to_json(rig)}, {"lambda", rows}};
}

LightWeights light_weights_from_json(const Json& j, LightRig* rig)
{
    const std::string ctx = "light weights";
    reject_unknown_keys(j, {"rig", "lambda"}, ctx);
    const LightRig r = rig_from_json(field(j, "rig", ctx));
    const Json& rows = field(j, "lambda", ctx);
    if (!rows.is_array() || rows.size() != r.size()) {
        throw DimensionError("lambda must have one row per rig light");
    }
    LightWeights lambda(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        lambda.row(static_cast<Eigen::Index>(i)) = vec3_from_json(rows[i], "lambda row").transpose();
    }
    if (rig) {
        *rig = r;
    }
    return lambda;
}

} // namespace refield
