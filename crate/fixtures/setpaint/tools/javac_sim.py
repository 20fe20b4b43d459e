"""Stand-in for `javac` on the fixture: resolves type and static-method
references of one test file against the fixture sources and imports."""
import os
import re
import sys

JAVA_LANG = {"String", "Object", "Math", "Integer", "Float", "Double", "Boolean",
             "IllegalArgumentException", "IllegalStateException", "RuntimeException",
             "Exception", "Override", "Test", "List", "ArrayList"}


def declared_types(root):
    names = {}
    for base in ("src/main/java", "src/test/java"):
        for dirpath, _, files in os.walk(os.path.join(root, base)):
            for f in files:
                if f.endswith(".java"):
                    pkg = os.path.relpath(dirpath, os.path.join(root, base)).replace(os.sep, ".")
                    names.setdefault(f[:-5], set()).add(pkg)
    return names


def main():
    root = sys.argv[1]
    if len(sys.argv) < 3 or sys.argv[2].startswith("{"):
        status = 0
        for dirpath, _, files in os.walk(os.path.join(root, "src/test/java")):
            for f in sorted(files):
                rel = os.path.relpath(os.path.join(dirpath, f), root)
                status |= check_file(root, rel)
        sys.exit(status)
    sys.exit(check_file(root, sys.argv[2]))


def check_file(root, test_file):
    with open(os.path.join(root, test_file)) as fh:
        text = fh.read()
    lines = text.split("\n")
    pkg = re.search(r"^package\s+([\w.]+);", text, re.M).group(1)
    imported = set()
    static_methods = set()
    for m in re.finditer(r"^import\s+(static\s+)?([\w.]+)\s*;", text, re.M):
        name = m.group(2).rsplit(".", 1)[-1]
        (static_methods if m.group(1) else imported).add(name)
    types = declared_types(root)
    errors = []
    if text.count("{") != text.count("}") or text.count("(") != text.count(")"):
        errors.append((len(lines), lines[-1] if lines else "", None, "reached end of file while parsing"))
    for i, line in enumerate(lines, 1):
        code = re.sub(r'"[^"]*"', '""', line.split("//")[0])
        if code.strip().startswith(("import", "package")):
            continue
        for t in re.findall(r"\b([A-Z]\w*)\b", code):
            if t in JAVA_LANG or t in imported or pkg in types.get(t, ()):
                continue
            if t.isupper():
                continue
            errors.append((i, line, "class " + t, "cannot find symbol"))
        for call in re.findall(r"(?<![\w.])(assert\w*|fail)\s*\(", code):
            if call not in static_methods:
                errors.append((i, line, "method " + call, "cannot find symbol"))
    seen = set()
    for i, line, symbol, msg in errors:
        if (i, symbol) in seen:
            continue
        seen.add((i, symbol))
        print(f"{test_file}:{i}: error: {msg}")
        print(line)
        if symbol:
            print(f"  symbol:   {symbol}")
            print(f"  location: class {os.path.basename(test_file)[:-5]}")
    if errors:
        print(f"{len(seen)} error{'s' if len(seen) > 1 else ''}")
        return 1
    return 0


if __name__ == "__main__":
    main()
