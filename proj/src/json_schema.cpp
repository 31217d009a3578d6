#include "reachcls/json_schema.hpp"

#include <sstream>

namespace reachcls {

namespace {

std::string describe(const nlohmann::json& v) {
  switch (v.type()) {
    case nlohmann::json::value_t::null:
      return "null";
    case nlohmann::json::value_t::boolean:
      return "boolean";
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned:
      return "integer";
    case nlohmann::json::value_t::number_float:
      return "number";
    case nlohmann::json::value_t::string:
      return "string";
    case nlohmann::json::value_t::array:
      return "array";
    case nlohmann::json::value_t::object:
      return "object";
    default:
      return "value";
  }
}

bool has_type(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  return false;
}

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string number_text(const nlohmann::json& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

class Validator {
 public:
  explicit Validator(const nlohmann::json& root) : root_(root) {}

  void check(const nlohmann::json& schema, const nlohmann::json& v, const std::string& path) {
    if (!schema.is_object()) return;
    if (auto it = schema.find("$ref"); it != schema.end()) {
      check(resolve(it->get<std::string>()), v, path);
    }
    if (auto it = schema.find("type"); it != schema.end()) {
      bool ok = false;
      std::string wanted;
      if (it->is_array()) {
        for (const auto& t : *it) {
          ok = ok || has_type(v, t.get<std::string>());
          wanted += (wanted.empty() ? "" : " or ") + t.get<std::string>();
        }
      } else {
        wanted = it->get<std::string>();
        ok = has_type(v, wanted);
      }
      if (!ok) {
        add(path, "expected " + wanted + ", got " + describe(v));
        return;
      }
    }
    if (auto it = schema.find("enum"); it != schema.end()) {
      bool found = false;
      for (const auto& e : *it) found = found || e == v;
      if (!found) add(path, "value " + v.dump() + " is not one of " + it->dump());
    }
    if (auto it = schema.find("const"); it != schema.end() && *it != v) {
      add(path, "expected " + it->dump());
    }
    if (v.is_number()) check_number(schema, v, path);
    if (v.is_string()) {
      if (auto it = schema.find("minLength"); it != schema.end() &&
                                              v.get<std::string>().size() < it->get<std::size_t>()) {
        add(path, "string shorter than " + number_text(*it));
      }
    }
    if (v.is_array()) check_array(schema, v, path);
    if (v.is_object()) check_object(schema, v, path);
  }

  std::vector<SchemaViolation> take() { return std::move(out_); }

 private:
  const nlohmann::json& resolve(const std::string& ref) {
    if (ref.rfind("#/", 0) != 0) throw std::invalid_argument("schema: only local $ref supported: " + ref);
    return root_.at(nlohmann::json::json_pointer(ref.substr(1)));
  }

  void check_number(const nlohmann::json& schema, const nlohmann::json& v, const std::string& path) {
    const double x = v.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>()) {
      add(path, "must be >= " + number_text(*it));
    }
    if (auto it = schema.find("maximum"); it != schema.end() && x > it->get<double>()) {
      add(path, "must be <= " + number_text(*it));
    }
    if (auto it = schema.find("exclusiveMinimum"); it != schema.end() && !(x > it->get<double>())) {
      add(path, "must be > " + number_text(*it));
    }
    if (auto it = schema.find("exclusiveMaximum"); it != schema.end() && !(x < it->get<double>())) {
      add(path, "must be < " + number_text(*it));
    }
  }

  void check_array(const nlohmann::json& schema, const nlohmann::json& v, const std::string& path) {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>()) {
      add(path, "needs at least " + number_text(*it) + " items");
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && v.size() > it->get<std::size_t>()) {
      add(path, "allows at most " + number_text(*it) + " items");
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) check(*it, v[i], path + "[" + std::to_string(i) + "]");
    }
  }

  void check_object(const nlohmann::json& schema, const nlohmann::json& v, const std::string& path) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& r : *it) {
        if (!v.contains(r.get<std::string>())) {
          add(join(path, r.get<std::string>()), "missing required field");
        }
      }
    }
    const auto props = schema.find("properties");
    const auto extra = schema.find("additionalProperties");
    for (const auto& [key, value] : v.items()) {
      if (props != schema.end() && props->contains(key)) {
        check(props->at(key), value, join(path, key));
      } else if (extra != schema.end()) {
        if (extra->is_boolean() && !extra->get<bool>()) {
          add(join(path, key), "unknown field");
        } else if (extra->is_object()) {
          check(*extra, value, join(path, key));
        }
      }
    }
  }

  void add(const std::string& path, std::string message) {
    out_.push_back({path.empty() ? "(root)" : path, std::move(message)});
  }

  const nlohmann::json& root_;
  std::vector<SchemaViolation> out_;
};

}  // namespace

std::vector<SchemaViolation> validate_json(const nlohmann::json& schema, const nlohmann::json& doc) {
  Validator v(schema);
  v.check(schema, doc, "");
  return v.take();
}

}  // namespace reachcls
