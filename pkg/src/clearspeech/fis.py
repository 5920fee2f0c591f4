"""Mamdani fuzzy inference: engine, bracketed config format and a built-in
system that maps (environment SNR, window size, frame overlap) to a predicted
recognition accuracy."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

CENTROID_POINTS = 1001
MF_KINDS = ("trimf", "gaussmf")
_MF_PARAM_COUNT = {"trimf": 3, "gaussmf": 2}


class FisParseError(ValueError):
    """Config text failed to parse; carries a line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownMfKindError(FisParseError):
    pass


class CountMismatchError(FisParseError):
    pass


class BadRangeError(FisParseError):
    pass


@dataclass
class MembershipFunction:
    name: str
    kind: str  # "trimf" | "gaussmf"
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in MF_KINDS:
            raise ValueError(f"unknown membership kind {self.kind!r}")
        self.params = tuple(float(p) for p in self.params)
        if len(self.params) != _MF_PARAM_COUNT[self.kind]:
            raise ValueError(
                f"{self.kind} takes {_MF_PARAM_COUNT[self.kind]} parameters"
            )
        if self.kind == "trimf":
            a, b, c = self.params
            if not (a <= b <= c) or a == c:
                raise ValueError("trimf needs a <= b <= c with a < c")
        else:
            sigma, _ = self.params
            if sigma <= 0:
                raise ValueError("gaussmf sigma must be positive")


@dataclass
class FuzzyVariable:
    name: str
    lo: float
    hi: float
    mfs: list[MembershipFunction] = field(default_factory=list)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"variable {self.name!r}: range must satisfy lo < hi")


@dataclass
class FuzzyRule:
    """antecedent/consequent hold 1-based MF indices per variable, 0 = unused."""

    antecedent: tuple[int, ...]
    consequent: tuple[int, ...]
    weight: float = 1.0
    connective: str = "and"  # "and" | "or"

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("rule weight must lie in [0, 1]")
        if self.connective not in ("and", "or"):
            raise ValueError(f"unknown connective {self.connective!r}")
        if not any(self.antecedent):
            raise ValueError("rule references no input")
        if not any(self.consequent):
            raise ValueError("rule references no output")


@dataclass
class FisConfig:
    name: str
    inputs: list[FuzzyVariable]
    outputs: list[FuzzyVariable]
    rules: list[FuzzyRule]
    fis_type: str = "mamdani"
    version: str = "2.0"
    and_method: str = "min"
    or_method: str = "max"
    imp_method: str = "min"
    agg_method: str = "max"
    defuzz_method: str = "centroid"

    def __post_init__(self):
        supported = {
            "fis_type": ("mamdani",),
            "and_method": ("min",),
            "or_method": ("max",),
            "imp_method": ("min",),
            "agg_method": ("max",),
            "defuzz_method": ("centroid",),
        }
        for attr, allowed in supported.items():
            if getattr(self, attr) not in allowed:
                raise ValueError(f"{attr} must be one of {allowed}")
        for rule in self.rules:
            if len(rule.antecedent) != len(self.inputs):
                raise ValueError("rule antecedent arity != number of inputs")
            if len(rule.consequent) != len(self.outputs):
                raise ValueError("rule consequent arity != number of outputs")
            for var, idx in zip(self.inputs, rule.antecedent):
                if idx > len(var.mfs):
                    raise ValueError(f"rule references missing MF on {var.name!r}")
            for var, idx in zip(self.outputs, rule.consequent):
                if idx > len(var.mfs):
                    raise ValueError(f"rule references missing MF on {var.name!r}")


def membership(mf: MembershipFunction, x: float) -> float:
    """Degree of membership in [0, 1]; defined for any real x."""
    if mf.kind == "trimf":
        a, b, c = mf.params
        if x <= a or x >= c:
            # the peak may sit on an edge (a == b or b == c)
            if x == b:
                return 1.0
            return 0.0
        if x < b:
            return (x - a) / (b - a)
        if x > b:
            return (c - x) / (c - b)
        return 1.0
    sigma, center = mf.params
    return float(np.exp(-((x - center) ** 2) / (2.0 * sigma**2)))


@dataclass
class FisResult:
    outputs: np.ndarray
    firing_strengths: np.ndarray  # weighted strength per rule
    no_rule_fired: bool


def evaluate(config: FisConfig, inputs) -> FisResult:
    """Run one crisp input vector through the system.

    min/max operators, weight scales the firing strength, min implication
    clips the consequent, max aggregation, centroid defuzzification over 1001
    evenly spaced points.  A zero aggregate yields the range midpoint and sets
    no_rule_fired.
    """
    values = [float(v) for v in inputs]
    if len(values) != len(config.inputs):
        raise ValueError(
            f"expected {len(config.inputs)} inputs, got {len(values)}"
        )
    strengths = np.zeros(len(config.rules))
    for r, rule in enumerate(config.rules):
        degrees = [
            membership(var.mfs[idx - 1], x)
            for var, idx, x in zip(config.inputs, rule.antecedent, values)
            if idx > 0
        ]
        combine = min if rule.connective == "and" else max
        strengths[r] = combine(degrees) * rule.weight

    outputs = np.zeros(len(config.outputs))
    any_fired = False
    for o, var in enumerate(config.outputs):
        grid = np.linspace(var.lo, var.hi, CENTROID_POINTS)
        aggregate = np.zeros(CENTROID_POINTS)
        for rule, strength in zip(config.rules, strengths):
            idx = rule.consequent[o]
            if idx == 0 or strength <= 0.0:
                continue
            mf = var.mfs[idx - 1]
            clipped = np.minimum(strength, [membership(mf, g) for g in grid])
            aggregate = np.maximum(aggregate, clipped)
        total = aggregate.sum()
        if total == 0.0:
            outputs[o] = (var.lo + var.hi) / 2.0
        else:
            outputs[o] = float((grid * aggregate).sum() / total)
            any_fired = True
    return FisResult(outputs, strengths, not any_fired)


def speech_accuracy_fis() -> FisConfig:
    """Built-in tuning system: environment SNR, window size and frame overlap
    in, predicted recognition accuracy out."""
    environment = FuzzyVariable(
        "Environment",
        10.0,
        50.0,
        [
            MembershipFunction("VNoisy", "trimf", (-6.0, 10.0, 20.0)),
            MembershipFunction("Noisy", "trimf", (20.0, 30.0, 35.0)),
            MembershipFunction("Clean", "trimf", (35.0, 50.0, 66.0)),
        ],
    )
    window = FuzzyVariable(
        "WinSz",
        240.0,
        270.0,
        [
            MembershipFunction("Small", "trimf", (225.0, 240.0, 250.0)),
            MembershipFunction("Medium", "trimf", (250.0, 255.0, 260.0)),
            MembershipFunction("Large", "trimf", (260.0, 270.0, 282.0)),
        ],
    )
    overlap = FuzzyVariable(
        "FrOver",
        20.0,
        60.0,
        [
            MembershipFunction("Small", "trimf", (4.0, 20.0, 40.0)),
            MembershipFunction("Medium", "trimf", (40.0, 45.0, 50.0)),
            MembershipFunction("Large", "trimf", (50.0, 60.0, 76.0)),
        ],
    )
    accuracy = FuzzyVariable(
        "Accuracy",
        95.0,
        100.0,
        [
            MembershipFunction("Good", "gaussmf", (0.8493, 95.0)),
            MembershipFunction("Better", "gaussmf", (0.8493, 97.5)),
            MembershipFunction("Best", "gaussmf", (0.8493, 100.0)),
        ],
    )
    rules = [
        FuzzyRule((3, 0, 0), (2,), 0.5, "and"),
        FuzzyRule((3, 0, 2), (3,), 0.75, "and"),
        FuzzyRule((3, 2, 2), (3,), 1.0, "and"),
        FuzzyRule((0, 0, 2), (2,), 0.5, "and"),
        FuzzyRule((0, 2, 0), (2,), 0.5, "and"),
    ]
    return FisConfig(
        "SpeechAccuracy", [environment, window, overlap], [accuracy], rules
    )


_SECTION_RE = re.compile(r"^\[(System|Input(\d+)|Output(\d+)|Rules)\]$")
_KEY_RE = re.compile(r"^(\w+)\s*=\s*(.*)$")
_MF_KEY_RE = re.compile(r"^MF(\d+)$")
_MF_VALUE_RE = re.compile(r"^'([^']*)'\s*:\s*(\w+)\s*,\s*\[([^\]]*)\]$")
_RANGE_RE = re.compile(r"^\[([^\]]*)\]$")
_TEXT_RULE_RE = re.compile(
    r"^(?:\d+\s*[.)]\s*)?If\s*\((.+)\)\s*then\s*\((.+?)\)\s*\(([0-9.eE+-]+)\)\s*$"
)
_CLAUSE_RE = re.compile(r"^\s*(\w+)\s+is\s+(\w+)\s*$")
_NUMERIC_RULE_RE = re.compile(
    r"^([\d\s-]+),\s*([\d\s-]+)\s*\(([0-9.eE+-]+)\)\s*:\s*([12])$"
)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def serialize_fis(config: FisConfig) -> str:
    """Emit the bracketed text form; parse_fis(serialize_fis(c)) == c."""
    out = ["[System]"]
    out.append(f"Name='{config.name}'")
    out.append(f"Type='{config.fis_type}'")
    out.append(f"Version={config.version}")
    out.append(f"NumInputs={len(config.inputs)}")
    out.append(f"NumOutputs={len(config.outputs)}")
    out.append(f"NumRules={len(config.rules)}")
    out.append(f"AndMethod='{config.and_method}'")
    out.append(f"OrMethod='{config.or_method}'")
    out.append(f"ImpMethod='{config.imp_method}'")
    out.append(f"AggMethod='{config.agg_method}'")
    out.append(f"DefuzzMethod='{config.defuzz_method}'")
    for label, variables in (("Input", config.inputs), ("Output", config.outputs)):
        for i, var in enumerate(variables, start=1):
            out.append("")
            out.append(f"[{label}{i}]")
            out.append(f"Name='{var.name}'")
            out.append(f"Range=[{_fmt(var.lo)} {_fmt(var.hi)}]")
            out.append(f"NumMFs={len(var.mfs)}")
            for m, mf in enumerate(var.mfs, start=1):
                params = " ".join(_fmt(p) for p in mf.params)
                out.append(f"MF{m}='{mf.name}':{mf.kind},[{params}]")
    out.append("")
    out.append("[Rules]")
    for n, rule in enumerate(config.rules, start=1):
        ante = f" {rule.connective} ".join(
            f"({var.name} is {var.mfs[idx - 1].name})"
            for var, idx in zip(config.inputs, rule.antecedent)
            if idx > 0
        )
        cons = " and ".join(
            f"({var.name} is {var.mfs[idx - 1].name})"
            for var, idx in zip(config.outputs, rule.consequent)
            if idx > 0
        )
        out.append(f"{n}. If {ante} then {cons} ({_fmt(rule.weight)})")
    return "\n".join(out) + "\n"


_SYSTEM_KEYS = {
    "Name",
    "Type",
    "Version",
    "NumInputs",
    "NumOutputs",
    "NumRules",
    "AndMethod",
    "OrMethod",
    "ImpMethod",
    "AggMethod",
    "DefuzzMethod",
}
_VARIABLE_KEYS = {"Name", "Range", "NumMFs"}


def _unquote(value: str, line_no: int) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == "'" and value[-1] == "'":
        return value[1:-1]
    return value


def _parse_floats(text: str, line_no: int, column: int) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise FisParseError(f"bad numeric list {text!r}", line_no, column) from None


def parse_fis(text: str) -> FisConfig:
    """Parse the bracketed config format.

    Sections are [System], [InputN], [OutputN] and [Rules].  key=value lines
    must use known keys; rules may be textual ("If (X is A) and (Y is B) then
    (Z is C) (0.5)") or compact numeric ("3 0 2, 2 (0.75) : 1" with 1=and,
    2=or).  Lines that are neither are treated as interleaved prose and
    skipped.
    """
    system: dict = {}
    variables: dict[tuple[str, int], dict] = {}
    rule_lines: list[tuple[int, str]] = []
    section: tuple[str, int] | None = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            token = m.group(1)
            if token == "System":
                section = ("System", 0)
            elif token == "Rules":
                section = ("Rules", 0)
            elif token.startswith("Input"):
                section = ("Input", int(m.group(2)))
                variables.setdefault(section, {"mfs": {}, "line": line_no})
            else:
                section = ("Output", int(m.group(3)))
                variables.setdefault(section, {"mfs": {}, "line": line_no})
            continue
        if line.startswith("[") and line.endswith("]"):
            raise FisParseError(f"unknown section {line!r}", line_no, 1)

        if section == ("System", 0):
            km = _KEY_RE.match(line)
            if not km:
                continue  # prose
            key, value = km.group(1), km.group(2)
            if key not in _SYSTEM_KEYS:
                raise FisParseError(f"unknown key {key!r} in [System]", line_no, 1)
            system[key] = _unquote(value, line_no)
        elif section is not None and section[0] in ("Input", "Output"):
            km = _KEY_RE.match(line)
            if not km:
                continue  # prose
            key, value = km.group(1), km.group(2)
            entry = variables[section]
            mf_match = _MF_KEY_RE.match(key)
            if mf_match:
                vm = _MF_VALUE_RE.match(value.strip())
                if not vm:
                    raise FisParseError(
                        f"malformed membership definition {value!r}", line_no, 1
                    )
                kind = vm.group(2)
                if kind not in MF_KINDS:
                    raise UnknownMfKindError(
                        f"unknown membership kind {kind!r}", line_no, 1
                    )
                params = _parse_floats(vm.group(3), line_no, 1)
                if len(params) != _MF_PARAM_COUNT[kind]:
                    raise CountMismatchError(
                        f"{kind} takes {_MF_PARAM_COUNT[kind]} parameters, "
                        f"got {len(params)}",
                        line_no,
                        1,
                    )
                entry["mfs"][int(mf_match.group(1))] = (
                    vm.group(1),
                    kind,
                    tuple(params),
                    line_no,
                )
            elif key in _VARIABLE_KEYS:
                entry[key] = (_unquote(value, line_no), line_no)
            else:
                raise FisParseError(
                    f"unknown key {key!r} in [{section[0]}{section[1]}]", line_no, 1
                )
        elif section == ("Rules", 0):
            stripped = line
            if _TEXT_RULE_RE.match(stripped) or _NUMERIC_RULE_RE.match(stripped):
                rule_lines.append((line_no, stripped))
            elif _KEY_RE.match(stripped):
                raise FisParseError("key=value line inside [Rules]", line_no, 1)
            # anything else inside [Rules] is prose
        # text before any section header is prose

    if not system:
        raise FisParseError("missing [System] section", 1, 1)

    inputs = _build_variables(variables, "Input")
    outputs = _build_variables(variables, "Output")
    rules = [_build_rule(line_no, txt, inputs, outputs) for line_no, txt in rule_lines]

    for key, seq, label in (
        ("NumInputs", inputs, "inputs"),
        ("NumOutputs", outputs, "outputs"),
        ("NumRules", rules, "rules"),
    ):
        if key in system and int(system[key]) != len(seq):
            raise CountMismatchError(
                f"{key}={system[key]} but {len(seq)} {label} defined", 1, 1
            )

    try:
        return FisConfig(
            name=system.get("Name", ""),
            inputs=inputs,
            outputs=outputs,
            rules=rules,
            fis_type=system.get("Type", "mamdani"),
            version=system.get("Version", "2.0"),
            and_method=system.get("AndMethod", "min"),
            or_method=system.get("OrMethod", "max"),
            imp_method=system.get("ImpMethod", "min"),
            agg_method=system.get("AggMethod", "max"),
            defuzz_method=system.get("DefuzzMethod", "centroid"),
        )
    except ValueError as exc:
        raise FisParseError(str(exc), 1, 1) from exc


def _build_variables(
    variables: dict[tuple[str, int], dict], kind: str
) -> list[FuzzyVariable]:
    keys = sorted(k for k in variables if k[0] == kind)
    for expected, key in enumerate(keys, start=1):
        if key[1] != expected:
            raise FisParseError(
                f"{kind} sections must be numbered consecutively from 1",
                variables[key]["line"],
                1,
            )
    built = []
    for key in keys:
        entry = variables[key]
        header_line = entry["line"]
        if "Name" not in entry or "Range" not in entry:
            raise FisParseError(
                f"[{kind}{key[1]}] needs Name and Range", header_line, 1
            )
        range_text, range_line = entry["Range"]
        rm = _RANGE_RE.match(range_text.strip())
        if not rm:
            raise BadRangeError(f"malformed range {range_text!r}", range_line, 1)
        bounds = _parse_floats(rm.group(1), range_line, 1)
        if len(bounds) != 2 or not bounds[0] < bounds[1]:
            raise BadRangeError(
                f"range needs two increasing bounds, got {range_text!r}",
                range_line,
                1,
            )
        mf_items = entry["mfs"]
        for expected in range(1, len(mf_items) + 1):
            if expected not in mf_items:
                raise FisParseError(
                    f"membership functions must be numbered MF1..MF{len(mf_items)}",
                    header_line,
                    1,
                )
        if "NumMFs" in entry:
            declared = int(entry["NumMFs"][0])
            if declared != len(mf_items):
                raise CountMismatchError(
                    f"NumMFs={declared} but {len(mf_items)} defined",
                    entry["NumMFs"][1],
                    1,
                )
        mfs = []
        for idx in sorted(mf_items):
            name, mf_kind, params, line_no = mf_items[idx]
            try:
                mfs.append(MembershipFunction(name, mf_kind, params))
            except ValueError as exc:
                raise FisParseError(str(exc), line_no, 1) from exc
        built.append(FuzzyVariable(entry["Name"][0], bounds[0], bounds[1], mfs))
    return built


def _mf_index(var: FuzzyVariable, mf_name: str, line_no: int) -> int:
    for i, mf in enumerate(var.mfs, start=1):
        if mf.name == mf_name:
            return i
    raise FisParseError(
        f"variable {var.name!r} has no membership function {mf_name!r}", line_no, 1
    )


def _var_by_name(variables: list[FuzzyVariable], name: str, line_no: int):
    for i, var in enumerate(variables):
        if var.name == name:
            return i, var
    raise FisParseError(f"unknown variable {name!r} in rule", line_no, 1)


def _build_rule(
    line_no: int, text: str, inputs: list[FuzzyVariable], outputs: list[FuzzyVariable]
) -> FuzzyRule:
    nm = _NUMERIC_RULE_RE.match(text)
    if nm:
        ante = [int(tok) for tok in nm.group(1).split()]
        cons = [int(tok) for tok in nm.group(2).split()]
        if len(ante) != len(inputs) or len(cons) != len(outputs):
            raise CountMismatchError(
                "numeric rule arity does not match variable counts", line_no, 1
            )
        connective = "and" if nm.group(4) == "1" else "or"
        return _checked_rule(
            ante, cons, float(nm.group(3)), connective, line_no, inputs, outputs
        )

    tm = _TEXT_RULE_RE.match(text)
    if not tm:
        raise FisParseError(f"malformed rule {text!r}", line_no, 1)
    ante_text, cons_text, weight = tm.group(1), tm.group(2), float(tm.group(3))
    connective = "and"
    if re.search(r"\)\s+or\s+\(", ante_text):
        if re.search(r"\)\s+and\s+\(", ante_text):
            raise FisParseError("mixed and/or in one rule", line_no, 1)
        connective = "or"
    splitter = r"\)\s+or\s+\(" if connective == "or" else r"\)\s+and\s+\("
    ante = [0] * len(inputs)
    for clause in re.split(splitter, ante_text.strip("() \t")):
        cm = _CLAUSE_RE.match(clause)
        if not cm:
            raise FisParseError(f"malformed clause {clause!r}", line_no, 1)
        idx, var = _var_by_name(inputs, cm.group(1), line_no)
        ante[idx] = _mf_index(var, cm.group(2), line_no)
    cons = [0] * len(outputs)
    for clause in re.split(r"\)\s+and\s+\(", cons_text.strip("() \t")):
        cm = _CLAUSE_RE.match(clause)
        if not cm:
            raise FisParseError(f"malformed clause {clause!r}", line_no, 1)
        idx, var = _var_by_name(outputs, cm.group(1), line_no)
        cons[idx] = _mf_index(var, cm.group(2), line_no)
    return _checked_rule(ante, cons, weight, connective, line_no, inputs, outputs)


def _checked_rule(ante, cons, weight, connective, line_no, inputs, outputs):
    for seq, variables in ((ante, inputs), (cons, outputs)):
        for idx, var in zip(seq, variables):
            if idx < 0 or idx > len(var.mfs):
                raise FisParseError(
                    f"MF index {idx} out of range for {var.name!r}", line_no, 1
                )
    try:
        return FuzzyRule(tuple(ante), tuple(cons), weight, connective)
    except ValueError as exc:
        raise FisParseError(str(exc), line_no, 1) from exc


def optimize_params(
    config: FisConfig, grid: list[tuple[int, float, float, float]]
) -> tuple[int, float, float]:
    """Pick (window_len, overlap_pct) maximizing the predicted accuracy.

    Grid rows are (window_len, overlap_pct, measured_snr_db, measured_accuracy).
    Ties prefer higher measured accuracy, then smaller window, then smaller
    overlap.  Returns (window_len, overlap_pct, predicted_accuracy).
    """
    if not grid:
        raise ValueError("empty evaluation grid")
    best = None
    for window_len, overlap_pct, snr, measured in grid:
        predicted = float(
            evaluate(config, (snr, window_len, overlap_pct)).outputs[0]
        )
        key = (predicted, measured, -window_len, -overlap_pct)
        if best is None or key > best[0]:
            best = (key, (int(window_len), float(overlap_pct), predicted))
    return best[1]
