"""
Scenario Configuration
----------------------
Line-oriented scenario files:

    # comment
    [domain]
    length_L = 1.0
    height_H = 1.0

    [model]
    rho = 0.5
    horizon_T = 1.0

    [x0]
    constant = 1.0
    mode 1 0 = 0.25

Settings sections are `[domain]`, `[model]`, `[problem]` and `[output]`.
Field sections (`[x0]`, `[effectiveness]`, `[target]`) take `constant = v`
and repeatable `mode m n = c` lines, summed, or a single `grid_file = path`.
Parsing collects every violation before failing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ValidationError

from app.errors import ConfigError
from app.models.schemas import (
    ConfigViolation,
    DomainSettings,
    DomainSpec,
    FieldSpec,
    GridField,
    ModelParams,
    ModelSettings,
    OutputSettings,
    ProblemSettings,
    ScenarioConfig,
    SpectralField,
)
from app.solvers.lq_targeting import ingest_target
from app.spectral.basis import constant_field, project_grid
from app.tools.exports import read_grid

logger = logging.getLogger(__name__)

SETTINGS_SECTIONS = {
    "domain": DomainSettings,
    "model": ModelSettings,
    "problem": ProblemSettings,
    "output": OutputSettings,
}
FIELD_SECTIONS = ("x0", "effectiveness", "target")
PATH_KEYS = {"output_dir"}

GAMMA_KINDS = {"p1", "p2", "p2_sweep", "verify"}
CAP_KINDS = {"mp_quadratic", "mp_linear"}


@dataclass
class _Section:
    header_line: int
    entries: Dict[str, Tuple[str, int]] = field(default_factory=dict)
    modes: Dict[Tuple[int, int], Tuple[float, int]] = field(default_factory=dict)


def _resolve(path_text: str, base_dir: Optional[Path]) -> Path:
    path = Path(path_text)
    if base_dir is not None and not path.is_absolute():
        path = (base_dir / path).resolve()
    return path


def _split_lines(text: str, violations: List[ConfigViolation]) -> Dict[str, _Section]:
    sections: Dict[str, _Section] = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SETTINGS_SECTIONS and name not in FIELD_SECTIONS:
                violations.append(ConfigViolation(line=lineno, section=name, message="unknown section"))
                current = None
                continue
            if name in sections:
                violations.append(ConfigViolation(line=lineno, section=name, message="section repeated"))
            sections.setdefault(name, _Section(header_line=lineno))
            current = name
            continue
        if "=" not in line:
            violations.append(ConfigViolation(line=lineno, section=current, message=f"expected 'key = value', got {line!r}"))
            continue
        if current is None:
            violations.append(ConfigViolation(line=lineno, message="key outside of any known section"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        section = sections[current]
        parts = key.split()
        if not parts:
            violations.append(ConfigViolation(line=lineno, section=current, key=key, message="unknown key (empty)"))
            continue
        if current in FIELD_SECTIONS and parts[0] == "mode":
            try:
                m, n = int(parts[1]), int(parts[2])
                if len(parts) != 3 or m < 0 or n < 0:
                    raise ValueError
                coeff = float(value)
            except (ValueError, IndexError):
                violations.append(ConfigViolation(line=lineno, section=current, key=key, message="expected 'mode m n = c' with m, n >= 0"))
                continue
            if (m, n) in section.modes:
                violations.append(ConfigViolation(line=lineno, section=current, key=key, message="mode given twice"))
            section.modes[(m, n)] = (coeff, lineno)
            continue
        if key in section.entries:
            violations.append(ConfigViolation(line=lineno, section=current, key=key, message="key given twice"))
        section.entries[key] = (value, lineno)
    return sections


def _convert(section: str, key: str, value: str, base_dir: Optional[Path]):
    if key == "k0_list":
        return [float(v) for v in value.split(",") if v.strip()]
    if key in PATH_KEYS:
        return _resolve(value, base_dir)
    return value


def _validate(model: type, name: str, sec: Optional[_Section], base_dir: Optional[Path], violations: List[ConfigViolation]) -> Optional[BaseModel]:
    raw: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    if sec is not None:
        for key, (value, lineno) in sec.entries.items():
            lines[key] = lineno
            try:
                raw[key] = _convert(name, key, value, base_dir)
            except ValueError:
                violations.append(ConfigViolation(line=lineno, section=name, key=key, message=f"cannot parse {value!r}"))
    try:
        return model(**raw)
    except ValidationError as exc:
        header = sec.header_line if sec is not None else None
        for err in exc.errors():
            key = str(err["loc"][0]) if err["loc"] else None
            message = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
            violations.append(ConfigViolation(line=lines.get(key, header), section=name, key=key, message=message))
        return None


def _field_spec(name: str, sec: _Section, base_dir: Optional[Path], violations: List[ConfigViolation]) -> Optional[FieldSpec]:
    constant = 0.0
    grid_file: Optional[Path] = None
    for key, (value, lineno) in sec.entries.items():
        if key == "constant":
            try:
                constant = float(value)
            except ValueError:
                violations.append(ConfigViolation(line=lineno, section=name, key=key, message=f"cannot parse {value!r}"))
        elif key == "grid_file":
            grid_file = _resolve(value, base_dir)
        else:
            violations.append(ConfigViolation(line=lineno, section=name, key=key, message="unknown key"))
    modes = {idx: coeff for idx, (coeff, _) in sec.modes.items()}
    try:
        return FieldSpec(constant=constant, modes=modes, grid_file=grid_file)
    except ValidationError:
        violations.append(ConfigViolation(line=sec.header_line, section=name, message="grid_file cannot be combined with constant or mode lines"))
        return None


def parse_config(text: str, base_dir: Optional[Union[str, Path]] = None) -> ScenarioConfig:
    """Parse a scenario file; relative paths resolve against `base_dir` when given."""
    base = Path(base_dir).resolve() if base_dir is not None else None
    violations: List[ConfigViolation] = []
    sections = _split_lines(text, violations)

    settings = {}
    for name, model in SETTINGS_SECTIONS.items():
        sec = sections.get(name)
        if sec is None and name in ("domain", "model"):
            violations.append(ConfigViolation(section=name, message="required section missing"))
            continue
        settings[name] = _validate(model, name, sec, base, violations)

    fields = {name: _field_spec(name, sections[name], base, violations) for name in FIELD_SECTIONS if name in sections}

    domain = settings.get("domain")
    if domain is not None:
        for name in FIELD_SECTIONS:
            for (m, n), (_, lineno) in sections.get(name, _Section(0)).modes.items():
                if m > domain.modes_M or n > domain.modes_N:
                    violations.append(ConfigViolation(line=lineno, section=name, key=f"mode {m} {n}", message=f"outside the truncation {domain.modes_M} x {domain.modes_N}"))
        try:
            DomainSpec(**domain.model_dump())
        except ValidationError as exc:
            for err in exc.errors():
                violations.append(ConfigViolation(line=sections["domain"].header_line, section="domain", message=err["msg"]))

    problem, model = settings.get("problem"), settings.get("model")
    if problem is not None and model is not None:
        kind_line = sections["problem"].entries.get("kind", ("", sections["problem"].header_line))[1] if "problem" in sections else None
        kind = problem.kind
        if kind in GAMMA_KINDS and model.gamma is None:
            violations.append(ConfigViolation(line=kind_line, section="model", key="gamma", message=f"required for problem kind {kind}"))
        if kind in CAP_KINDS and "cap_R" not in sections["model"].entries:
            violations.append(ConfigViolation(line=kind_line, section="model", key="cap_R", message=f"required for problem kind {kind}"))
        if kind == "mp_linear" and not math.isfinite(model.cap_R):
            violations.append(ConfigViolation(line=kind_line, section="model", key="cap_R", message="linear cost needs a finite cap"))
        if kind == "budget" and problem.budget_M is None:
            violations.append(ConfigViolation(line=kind_line, section="problem", key="budget_M", message="required for problem kind budget"))
        if kind == "p2_sweep" and not problem.k0_list:
            violations.append(ConfigViolation(line=kind_line, section="problem", key="k0_list", message="required for problem kind p2_sweep"))
        if kind == "p2" and "target" not in fields:
            violations.append(ConfigViolation(line=kind_line, section="target", message="required for problem kind p2"))

    if violations:
        raise ConfigError(violations)

    return ScenarioConfig(
        domain=settings["domain"],
        model=settings["model"],
        problem=settings["problem"] or ProblemSettings(),
        output=settings["output"] or OutputSettings(),
        **fields,
    )


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _num(x: float) -> str:
    return repr(float(x))


def _render_settings(name: str, settings: BaseModel) -> List[str]:
    lines = [f"[{name}]"]
    for key, value in settings.model_dump().items():
        if value is None:
            continue
        if isinstance(value, float):
            text = _num(value)
        elif isinstance(value, list):
            text = ", ".join(_num(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return lines


def _render_field(name: str, spec: FieldSpec) -> List[str]:
    lines = [f"[{name}]"]
    if spec.grid_file is not None:
        lines.append(f"grid_file = {spec.grid_file}")
        return lines
    lines.append(f"constant = {_num(spec.constant)}")
    lines.extend(f"mode {m} {n} = {_num(c)}" for (m, n), c in sorted(spec.modes.items()))
    return lines


def render_config(cfg: ScenarioConfig) -> str:
    """Inverse of parse_config: parse_config(render_config(c)) == c."""
    blocks = [_render_settings(name, getattr(cfg, name)) for name in SETTINGS_SECTIONS]
    blocks.append(_render_field("x0", cfg.x0))
    blocks.append(_render_field("effectiveness", cfg.effectiveness))
    if cfg.target is not None:
        blocks.append(_render_field("target", cfg.target))
    return "\n\n".join("\n".join(b) for b in blocks) + "\n"


# --- materialization -------------------------------------------------------------


def _spectral(domain: DomainSpec, spec: FieldSpec) -> SpectralField:
    field_ = constant_field(domain, spec.constant)
    coeffs = field_.coeffs.copy()
    for (m, n), c in spec.modes.items():
        coeffs[m, n] += c
    return field_.with_coeffs(coeffs)


def build_domain(cfg: ScenarioConfig) -> DomainSpec:
    return DomainSpec(**cfg.domain.model_dump())


def build_field(domain: DomainSpec, spec: FieldSpec) -> SpectralField:
    if spec.grid_file is not None:
        return project_grid(domain, read_grid(spec.grid_file))
    return _spectral(domain, spec)


def build_model_params(cfg: ScenarioConfig) -> Tuple[DomainSpec, ModelParams, Optional[SpectralField]]:
    """Materialize the field specs of a scenario into solver inputs."""
    domain = build_domain(cfg)
    x0 = build_field(domain, cfg.x0)
    b: Union[SpectralField, GridField]
    if cfg.effectiveness.grid_file is not None:
        b = read_grid(cfg.effectiveness.grid_file)
    else:
        b = _spectral(domain, cfg.effectiveness)
    target = None
    if cfg.target is not None:
        if cfg.target.grid_file is not None:
            target = ingest_target(domain, read_grid(cfg.target.grid_file))
        else:
            target = _spectral(domain, cfg.target)

    m = cfg.model
    kwargs = dict(rho=m.rho, horizon_T=m.horizon_T, effectiveness_b=b, cap_R=m.cap_R, x0=x0, diffusion=m.diffusion)
    if m.gamma is not None:
        kwargs["gamma"] = m.gamma
    return domain, ModelParams(**kwargs), target
