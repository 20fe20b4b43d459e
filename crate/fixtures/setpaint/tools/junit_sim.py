"""Stand-in for running one JUnit test of the fixture. Tracks the paint
handed to `setPaint` and evaluates the assertions of the test method."""
import os
import re
import sys


def method_body(text, name):
    m = re.search(r"void\s+" + re.escape(name) + r"\s*\(\s*\)[^{]*\{", text)
    if not m:
        return None, 0
    depth, i = 1, m.end()
    while depth and i < len(text):
        depth += {"{": 1, "}": -1}.get(text[i], 0)
        i += 1
    return text[m.end():i - 1], text.count("\n", 0, m.end()) + 1


def split_args(s):
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
            continue
        depth += ch in "([{"
        depth -= ch in ")]}"
        cur += ch
    out.append(cur.strip())
    return out


def check(stmt, paint, paint_type):
    m = re.match(r"(assert\w+)\s*\((.*)\)\s*;\s*$", stmt, re.S)
    if not m:
        return None
    fn, args = m.group(1), split_args(m.group(2))
    getter = [a for a in args if a.endswith(".getPaint()")]
    if fn in ("assertEquals", "assertSame") and getter and len(args) == 2:
        other = args[0] if args[1] in getter else args[1]
        if other != paint:
            return f"expected:<{other}> but was:<{paint}>"
    elif fn in ("assertNotEquals", "assertNotSame") and getter and len(args) == 2:
        other = args[0] if args[1] in getter else args[1]
        if other == paint:
            return f"values should be different. Actual: {paint}"
    elif fn == "assertNull" and getter:
        return f"expected null, but was:<{paint}>"
    elif fn == "assertNotNull" and args == ["null"]:
        return "expected not null"
    elif fn == "assertTrue" and args == ["false"]:
        return "expected true"
    elif fn == "assertFalse" and args == ["true"]:
        return "expected false"
    elif fn == "assertTrue" and re.fullmatch(r"\w+\.getPaint\(\)\s+instanceof\s+(\w+)", args[0] or ""):
        kind = args[0].rsplit(" ", 1)[-1]
        if kind != paint_type and not (kind in ("Paint", "MultipleGradientPaint") and paint_type.endswith("GradientPaint")):
            return f"{paint} is not a {kind}"
    return None


def main():
    root, test_file, method = sys.argv[1], sys.argv[2], sys.argv[3]
    with open(os.path.join(root, test_file)) as fh:
        text = fh.read()
    body, first_line = method_body(text, method)
    if body is None:
        print(f"No tests found matching Method {method}")
        sys.exit(1)
    cls = os.path.basename(test_file)[:-5]
    pkg = re.search(r"^package\s+([\w.]+);", text, re.M).group(1)
    paint = "Color.BLACK"
    decls = {}
    for offset, raw in enumerate(body.split("\n")):
        line = raw.strip()
        d = re.match(r"(\w+)\s+(\w+)\s*=\s*new\s+(\w+)\s*\(", line)
        if d:
            decls[d.group(2)] = d.group(3)
        s = re.match(r"\w+\.setPaint\((.*)\);$", line)
        if s:
            paint = s.group(1).strip()
            if paint == "null":
                print("java.lang.IllegalArgumentException: paint must not be null")
                print("\tat org.demo.canvas.Canvas.setPaint(Canvas.java:20)")
                print(f"\tat {pkg}.{cls}.{method}({cls}.java:{first_line + offset})")
                sys.exit(1)
        if line.startswith("assert"):
            failure = check(line, paint, decls.get(paint, "Color"))
            if failure:
                print(f"java.lang.AssertionError: {failure}")
                print("\tat org.junit.Assert.fail(Assert.java:89)")
                print(f"\tat {pkg}.{cls}.{method}({cls}.java:{first_line + offset})")
                sys.exit(1)
    print("OK (1 test)")


if __name__ == "__main__":
    main()
