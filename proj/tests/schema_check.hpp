#pragma once

#include "refield/json_io.hpp"

#include <string>

namespace refield::test {

/// Validates `value` against the subset of JSON Schema used by the shipped
/// schemas: type, enum, required, properties, additionalProperties, items,
/// minimum. Returns an empty string on success, else the first violation.
inline std::string schema_violation(const Json& schema, const Json& value, const std::string& where = "$")
{
    const auto type_ok = [&](const std::string& t) {
        if (t == "object") return value.is_object();
        if (t == "array") return value.is_array();
        if (t == "string") return value.is_string();
        if (t == "boolean") return value.is_boolean();
        if (t == "integer") return value.is_number_integer();
        if (t == "number") return value.is_number();
        if (t == "null") return value.is_null();
        return false;
    };
    if (schema.contains("type")) {
        const Json& t = schema["type"];
        bool ok = false;
        if (t.is_array()) {
            for (const auto& alt : t) {
                ok = ok || type_ok(alt.get<std::string>());
            }
        } else {
            ok = type_ok(t.get<std::string>());
        }
        if (!ok) {
            return where + ": expected type " + t.dump();
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) {
            found = found || e == value;
        }
        if (!found) {
            return where + ": value " + value.dump() + " not in enum";
        }
    }
    if (schema.contains("minimum") && value.is_number() && value.get<double>() < schema["minimum"].get<double>()) {
        return where + ": below minimum";
    }
    if (value.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema["required"]) {
                if (!value.contains(key.get<std::string>())) {
                    return where + ": missing required '" + key.get<std::string>() + "'";
                }
            }
        }
        const Json props = schema.value("properties", Json::object());
        for (const auto& [key, item] : value.items()) {
            if (props.contains(key)) {
                const std::string err = schema_violation(props[key], item, where + "." + key);
                if (!err.empty()) {
                    return err;
                }
            } else if (schema.contains("additionalProperties")) {
                const Json& extra = schema["additionalProperties"];
                if (extra.is_boolean()) {
                    if (!extra.get<bool>()) {
                        return where + ": unexpected key '" + key + "'";
                    }
                } else {
                    const std::string err = schema_violation(extra, item, where + "." + key);
                    if (!err.empty()) {
                        return err;
                    }
                }
            }
        }
    }
    if (value.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < value.size(); ++i) {
            const std::string err = schema_violation(schema["items"], value[i], where + "[" + std::to_string(i) + "]");
            if (!err.empty()) {
                return err;
            }
        }
    }
    return {};
}

} // namespace refield::test
