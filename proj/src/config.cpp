#include "config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace gwpoct {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  require(end == t.c_str() + t.size() && !t.empty(), Errc::parse,
          "key '" + key + "': cannot parse number from '" + text + "'");
  return v;
}

}  // namespace

std::string format_double(double value) {
  // Shortest %.{p}g that parses back to the same bits keeps files readable and
  // output byte-stable across runs.
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const size_t eq = t.find('=');
    require(eq != std::string::npos, Errc::parse,
            origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    require(!key.empty(), Errc::parse, origin + ":" + std::to_string(lineno) + ": empty key");
    kv.set(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

void KeyValues::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write '" + path + "'");
  out << serialize();
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

std::string KeyValues::serialize() const {
  std::string out;
  for (const Entry& e : entries_) {
    out += e.key;
    out += " = ";
    out += e.value;
    out += '\n';
  }
  return out;
}

bool KeyValues::has(const std::string& key) const { return find(key) != nullptr; }

std::vector<std::string> KeyValues::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.key);
  return out;
}

const KeyValues::Entry* KeyValues::find(const std::string& key) const {
  for (const Entry& e : entries_)
    if (e.key == key) return &e;
  return nullptr;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  for (Entry& e : entries_) {
    if (e.key == key) {
      e.value = value;
      return;
    }
  }
  entries_.push_back({key, value});
}

void KeyValues::set_double(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValues::set_int(const std::string& key, long long value) { set(key, std::to_string(value)); }
void KeyValues::set_bool(const std::string& key, bool value) { set(key, value ? "true" : "false"); }

void KeyValues::set_list(const std::string& key, const std::vector<double>& values) {
  std::string v;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) v += ", ";
    v += format_double(values[i]);
  }
  set(key, v);
}

std::string KeyValues::get_string(const std::string& key) const {
  const Entry* e = find(key);
  require(e != nullptr, Errc::parse, "missing required key '" + key + "'");
  return e->value;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double KeyValues::get_double(const std::string& key) const {
  return parse_double(get_string(key), key);
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  return e ? parse_double(e->value, key) : fallback;
}

long long KeyValues::get_int(const std::string& key) const {
  const double v = get_double(key);
  const long long n = static_cast<long long>(v);
  require(static_cast<double>(n) == v, Errc::parse, "key '" + key + "': expected an integer");
  return n;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(Errc::parse, "key '" + key + "': expected a boolean, got '" + v + "'");
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<double> KeyValues::get_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<double> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(parse_double(item, key));
  require(!out.empty(), Errc::parse, "key '" + key + "': empty list");
  return out;
}

std::vector<double> KeyValues::get_list(const std::string& key,
                                        const std::vector<double>& fallback) const {
  return has(key) ? get_list(key) : fallback;
}

}  // namespace gwpoct
