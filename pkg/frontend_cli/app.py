import sys, os
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
import argparse
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import BaseModel, ValidationError, field_validator

from tdlmc import config
from tdlmc.constraints import ConstraintError
from tdlmc.msr import MsrError, format_spec, post_star_bounded
from tdlmc.reports import ReportModel, oracle_model, report_model, simulation_model
from tdlmc.simulator import SimulationError, Simulator, parse_script
from tdlmc.symbolic import (
    ReplayError, SymbolicError, Verdict, member, parse_unsafe, replay_trace, sbr,
)
from tdlmc.tdl import Program, TdlSyntaxError, has_errors, load_program, validate
from tdlmc.translate import TranslationError, monadize, translate_program

logger = logging.getLogger("tdlmc.cli")

EXIT_SAFE = 0
EXIT_UNSAFE = 1
EXIT_BOUND = 2
EXIT_INPUT = 3

VERDICT_EXIT = {Verdict.SAFE: EXIT_SAFE, Verdict.UNSAFE: EXIT_UNSAFE, Verdict.BOUND_EXCEEDED: EXIT_BOUND}


class InputError(Exception):
    """Ошибка входных данных: печатается как `error: ...`, код выхода 3."""


class SourceError(InputError):
    """Синтаксическая ошибка в файле: печатается как `file:line:col: msg`."""


# === Параметры запуска ===

class RunConfig(BaseModel):
    command: str
    paths: List[Path]
    seed: int = 0
    steps: int = config.SIM_STEPS
    max_iterations: int = config.MAX_ITERATIONS
    max_set_size: int = config.MAX_SET_SIZE
    max_atoms: int = config.MAX_ATOMS
    value_cap: int = config.VALUE_CAP
    max_configs: int = config.MAX_CONFIGS
    threads: int = config.THREADS
    output_format: str = "text"
    monadic: bool = False
    self_sync: bool = False
    progress: bool = config.PROGRESS

    @field_validator("paths")
    @classmethod
    def _paths_exist(cls, v: List[Path]) -> List[Path]:
        missing = [str(p) for p in v if not p.is_file()]
        if missing:
            raise ValueError(f"no such file: {', '.join(missing)}")
        return v

    @field_validator("max_iterations", "max_set_size", "value_cap", "max_configs", "threads")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("steps", "max_atoms")
    @classmethod
    def _non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("output_format")
    @classmethod
    def _format(cls, v: str) -> str:
        if v not in ("text", "json"):
            raise ValueError("must be text or json")
        return v


def make_config(args: argparse.Namespace) -> RunConfig:
    paths = [Path(p) for p in (args.program, getattr(args, "unsafe", None), getattr(args, "script", None),
                               getattr(args, "verdict_file", None)) if p]
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.model_fields and v is not None}
    try:
        return RunConfig(paths=paths, **fields)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(x) for x in err['loc'])}: {err['msg']}" for err in e.errors())
        raise InputError(problems) from e


# === Загрузка входов ===

def read_program(path: str) -> Program:
    try:
        program = load_program(path)
    except TdlSyntaxError as e:
        raise SourceError(f"{path}:{e.line}:{e.column}: {e.message}") from e
    diagnostics = validate(program)
    for d in diagnostics:
        print(d.format(path), file=sys.stderr)
    if has_errors(diagnostics):
        raise InputError(f"{path}: program does not validate")
    return program


def compile_program(path: str, cfg: RunConfig):
    spec = translate_program(read_program(path), self_sync=cfg.self_sync)
    if cfg.monadic:
        spec = monadize(spec)
    return spec


def read_unsafe(path: str):
    members = parse_unsafe(Path(path).read_text(encoding="utf-8"))
    if not members:
        raise InputError(f"{path}: empty unsafe set")
    return members


def emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# === Команды ===

def cmd_check(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec = compile_program(args.program, cfg)
    unsafe = read_unsafe(args.unsafe)
    report = sbr(spec, unsafe, cfg.max_iterations, cfg.max_set_size, cfg.threads, cfg.progress)
    run = None
    if report.verdict is Verdict.UNSAFE:
        try:
            run = replay_trace(report, spec)
        except ReplayError as e:
            logger.error("Не удалось конкретизировать след: %s", e)
    if cfg.output_format == "json":
        emit(report_model(report).model_dump_json(indent=2))
    else:
        lines = [
            f"verdict: {report.verdict.value}",
            f"iterations: {report.iterations}",
            f"fixpoint size: {report.fixpoint_size}",
            f"elapsed: {int(report.elapsed * 1000)} ms",
        ]
        if report.trace:
            lines.append("symbolic trace:")
            lines.extend(f"  {cc}" + (f"  --{rule}-->" if rule else "") for rule, cc in report.trace)
        if run:
            lines.append("concrete run:")
            lines.extend(f"  {rule or 'start'}: {m}" for rule, m in run)
        emit("\n".join(lines))
    return VERDICT_EXIT[report.verdict]


def cmd_compile(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec = compile_program(args.program, cfg)
    text = format_spec(spec)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        emit(text)
    return 0


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    program = read_program(args.program)
    sim = Simulator(program)
    g0 = sim.initial_configuration()
    if args.script:
        run = sim.run_script(g0, parse_script(Path(args.script).read_text(encoding="utf-8")))
    else:
        run = sim.run_random(g0, cfg.steps, cfg.seed)
    hit: Optional[int] = None
    if args.unsafe:
        unsafe = read_unsafe(args.unsafe)
        hit = next((k for k, g in enumerate(run.configurations) if sim.match_unsafe(g, unsafe)), None)
    if cfg.output_format == "json":
        emit(simulation_model(run, hit).model_dump_json(indent=2))
    else:
        lines = [f"0: {run.configurations[0]}"]
        for k, (s, g) in enumerate(zip(run.steps, run.configurations[1:]), 1):
            lines.append(f"{k}: {s.describe()} : {g}")
        lines.append(f"stop: {run.stop_reason}")
        if hit is not None:
            lines.append(f"unsafe configuration reached at step {hit}")
        emit("\n".join(lines))
    return EXIT_UNSAFE if hit is not None else 0


def cmd_oracle(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec = compile_program(args.program, cfg)
    unsafe = read_unsafe(args.unsafe)
    prior = None
    if args.verdict_file:
        prior = ReportModel.model_validate_json(Path(args.verdict_file).read_text(encoding="utf-8")).verdict
    result = post_star_bounded(spec, cfg.max_atoms, cfg.value_cap, cfg.max_configs,
                               stop=lambda m: any(member(cc, m) for cc in unsafe),
                               threads=cfg.threads, progress=cfg.progress)
    model = oracle_model(result, prior)
    if cfg.output_format == "json":
        emit(model.model_dump_json(indent=2))
    else:
        lines = [
            f"explored: {model.explored}" + (" (truncated)" if model.truncated else ""),
            f"bad configuration found: {'yes' if model.bad_found else 'no'}",
        ]
        lines.extend(f"  {w}" for w in model.witness)
        if model.agreement is not None:
            lines.append(f"agrees with {prior}: {'yes' if model.agreement else 'NO'}")
        emit("\n".join(lines))
    return EXIT_UNSAFE if model.bad_found else 0


# === Разбор аргументов ===

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", dest="output_format", choices=("text", "json"), default="text")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="число рабочих потоков (TDLMC_THREADS)")
    common.add_argument("--progress", action="store_true", default=None, help="показывать tqdm-прогресс")
    common.add_argument("-v", "--verbose", action="store_true")

    translation = argparse.ArgumentParser(add_help=False)
    translation.add_argument("--monadic", action="store_true")
    translation.add_argument("--self-sync", dest="self_sync", action="store_true",
                             help="транслировать rendez-vous между экземплярами одного определения")

    parser = argparse.ArgumentParser(prog="tdlmc", description="Проверка безопасности TDL-программ через MSR_NC")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common, translation], help="символьная обратная достижимость")
    p.add_argument("program")
    p.add_argument("unsafe")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--max-set-size", type=int, default=None)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("compile", parents=[common, translation], help="трансляция в MSR_NC")
    p.add_argument("program")
    p.add_argument("-o", "--output")
    p.set_defaults(handler=cmd_compile)

    p = sub.add_parser("simulate", parents=[common], help="конкретный прогон")
    p.add_argument("program")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--script")
    p.add_argument("--unsafe")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("oracle", parents=[common, translation], help="ограниченный прямой перебор")
    p.add_argument("program")
    p.add_argument("unsafe")
    p.add_argument("--max-atoms", type=int, default=None)
    p.add_argument("--value-cap", type=int, default=None)
    p.add_argument("--max-configs", type=int, default=None)
    p.add_argument("--verdict-file")
    p.set_defaults(handler=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.INFO if args.verbose else getattr(logging, config.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s:%(name)s:%(message)s")
    try:
        cfg = make_config(args)
        return args.handler(args, cfg)
    except SourceError as e:
        print(e, file=sys.stderr)
        return EXIT_INPUT
    except (InputError, TdlSyntaxError, MsrError, ConstraintError, SimulationError, TranslationError,
            SymbolicError, ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
