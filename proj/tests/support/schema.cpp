#include "schema.hpp"

#include <fstream>
#include <regex>
#include <stdexcept>

namespace storywrangler::testing {

namespace {

using json = nlohmann::json;

bool has_type(const json& v, const std::string& type) {
    if (type == "null") return v.is_null();
    if (type == "boolean") return v.is_boolean();
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "number") return v.is_number();
    if (type == "integer") {
        if (v.is_number_integer()) return true;
        return v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()));
    }
    throw std::invalid_argument("schema uses unsupported type '" + type + "'");
}

class Validator {
public:
    explicit Validator(const json& root) : root_(root) {}

    void check(const json& schema, const json& v, const std::string& where) {
        if (schema.contains("$ref")) {
            const auto ref = schema["$ref"].get<std::string>();
            const std::string prefix = "#/$defs/";
            if (ref.rfind(prefix, 0) != 0) throw std::invalid_argument("unsupported $ref " + ref);
            check(root_.at("$defs").at(ref.substr(prefix.size())), v, where);
            return;
        }
        if (schema.contains("type")) {
            const auto& t = schema["type"];
            bool ok = false;
            if (t.is_string()) {
                ok = has_type(v, t.get<std::string>());
            } else {
                for (const auto& each : t) ok = ok || has_type(v, each.get<std::string>());
            }
            if (!ok) {
                fail(where, "expected type " + t.dump() + ", got " + v.dump().substr(0, 80));
                return;
            }
        }
        if (schema.contains("const") && v != schema["const"]) fail(where, "expected " + schema["const"].dump());
        if (schema.contains("enum")) {
            bool found = false;
            for (const auto& e : schema["enum"]) found = found || e == v;
            if (!found) fail(where, v.dump() + " not in " + schema["enum"].dump());
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (schema.contains("minimum") && x < schema["minimum"].get<double>()) fail(where, "below minimum");
            if (schema.contains("maximum") && x > schema["maximum"].get<double>()) fail(where, "above maximum");
            if (schema.contains("exclusiveMinimum") && !(x > schema["exclusiveMinimum"].get<double>())) {
                fail(where, "not above exclusiveMinimum");
            }
        }
        if (v.is_string() && schema.contains("pattern")) {
            const std::regex re(schema["pattern"].get<std::string>(), std::regex::ECMAScript);
            if (!std::regex_search(v.get<std::string>(), re)) fail(where, "'" + v.get<std::string>() + "' fails pattern");
        }
        if (v.is_array()) {
            if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) fail(where, "too few items");
            if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>()) fail(where, "too many items");
            if (schema.contains("items")) {
                for (std::size_t i = 0; i < v.size(); ++i) check(schema["items"], v[i], where + "[" + std::to_string(i) + "]");
            }
        }
        if (v.is_object()) {
            if (schema.contains("required")) {
                for (const auto& key : schema["required"]) {
                    if (!v.contains(key.get<std::string>())) fail(where, "missing required '" + key.get<std::string>() + "'");
                }
            }
            const json empty = json::object();
            const auto& props = schema.contains("properties") ? schema["properties"] : empty;
            for (const auto& [key, value] : v.items()) {
                if (props.contains(key)) {
                    check(props[key], value, where + "." + key);
                } else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false) {
                    fail(where, "unexpected property '" + key + "'");
                }
            }
        }
    }

    std::vector<std::string> errors;

private:
    void fail(const std::string& where, const std::string& what) { errors.push_back((where.empty() ? "$" : where) + ": " + what); }

    const json& root_;
};

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& instance) {
    Validator v(schema);
    v.check(schema, instance, "$");
    return v.errors;
}

nlohmann::json load_schema(const std::string& name) {
    const std::string path = std::string(STORYWRANGLER_SOURCE_DIR) + "/docs/schemas/" + name + ".schema.json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return nlohmann::json::parse(in);
}

}  // namespace storywrangler::testing
