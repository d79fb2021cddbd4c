import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from app.utils import format_number, plot_sweep_svg, plot_zones_svg, write_csv, write_json
from src.config import (
    OUTPUT_CONFIG,
    SENSITIVITY_CONFIG,
    SIMULATION_CONFIG,
    ZONING_CONFIG,
    get_fixture_dir,
    setup_logging,
)
from src.network_model import NetworkCase, apply_scenario, load_case, load_scenario, reduced_dynamics
from src.sensitivity import PARAMETERS, MODES, sensitivity_table, targets_from_text
from src.swing_sim import DISTURBANCE_KINDS, DisturbanceSpec, coherence_score, peak_response, simulate
from src.utils import ErrorHandler
from src.zoning import inertia_sweep, sweep_values, zone_case

logger = logging.getLogger(__name__)

FORMATS = OUTPUT_CONFIG['formats']


@dataclass(frozen=True)
class RunConfig:
    """Effective settings of one run, embedded verbatim in every artifact."""
    command: str
    case_path: Optional[str] = None
    scenario_path: Optional[str] = None
    r: int = ZONING_CONFIG['r']
    tau: float = ZONING_CONFIG['tau']
    seed: int = ZONING_CONFIG['seed']
    max_iter: int = ZONING_CONFIG['max_iter']
    out_dir: str = '.'
    formats: Tuple[str, ...] = FORMATS
    options: Dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace, options: Optional[Dict] = None) -> 'RunConfig':
        formats = tuple(f for f in FORMATS if f in (args.formats or FORMATS))
        return cls(
            command=args.command,
            case_path=args.case,
            scenario_path=args.scenario,
            r=args.r,
            tau=args.tau,
            seed=args.seed,
            max_iter=args.max_iter,
            out_dir=args.out,
            formats=formats,
            options=options or {}
        )

    def to_metadata(self) -> Dict:
        meta = asdict(self)
        meta['formats'] = list(self.formats)
        meta['schema_version'] = OUTPUT_CONFIG['schema_version']
        meta['nonnegative_transform'] = OUTPUT_CONFIG['nonnegative_transform']
        return meta

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats

    def artifact(self, name: str) -> Path:
        return Path(self.out_dir) / name


def resolve_scenario_path(value: str) -> Path:
    """A bare scenario number 1-4 names a bundled fixture; anything else is a path."""
    if value.isdigit():
        return get_fixture_dir() / f'scenario{int(value)}.json'
    return Path(value)


def load_run_case(cfg: RunConfig) -> NetworkCase:
    case_path = Path(cfg.case_path) if cfg.case_path else get_fixture_dir() / 'ieee39_base.json'
    case = load_case(case_path)
    if cfg.scenario_path:
        case = apply_scenario(case, load_scenario(resolve_scenario_path(cfg.scenario_path)))
    return case


def cmd_zones(cfg: RunConfig) -> List[Path]:
    """Zone the case and write the zoning document, table and scatter plot."""
    case = load_run_case(cfg)
    zr = zone_case(case, r=cfg.r, tau=cfg.tau, seed=cfg.seed, max_iter=cfg.max_iter)
    meta = cfg.to_metadata()
    written = []
    if cfg.wants('json'):
        doc = zr.to_document()
        doc['metadata'] = meta
        doc['case'] = case.name
        written.append(write_json(doc, cfg.artifact('zones.json')))
    if cfg.wants('csv'):
        written.append(write_csv(zr.to_frame(), cfg.artifact('zones.csv'), meta))
    if cfg.wants('svg'):
        written.append(plot_zones_svg(zr, cfg.artifact('zones.svg'), meta))
    logger.info(f"Zoned {case.name}: k={zr.k}, sed={[format_number(s) for s in zr.sed]}")
    return written


def cmd_sweep(cfg: RunConfig) -> List[Path]:
    """Re-zone the case over a range of inertia constants at one generator."""
    opts = cfg.options
    case = load_run_case(cfg)
    values = sweep_values(opts['h_from'], opts['h_to'], opts['h_step'])
    df = inertia_sweep(case, opts['bus'], values, r=cfg.r, tau=cfg.tau, seed=cfg.seed, max_iter=cfg.max_iter)
    meta = cfg.to_metadata()
    written = []
    if cfg.wants('json'):
        doc = {'schema_version': OUTPUT_CONFIG['schema_version'], 'case': case.name, 'h_values': values,
               'k_per_h': df.groupby('h')['k'].first().tolist(), 'metadata': meta}
        written.append(write_json(doc, cfg.artifact('sweep.json')))
    if cfg.wants('csv'):
        written.append(write_csv(df, cfg.artifact('sweep.csv'), meta))
    if cfg.wants('svg'):
        highlight = sorted(set(opts.get('highlight') or []) | {opts['bus']})
        written.append(plot_sweep_svg(df, cfg.artifact('sweep.svg'), dict(meta, bus=opts['bus']), highlight))
    return written


def cmd_sensitivity(cfg: RunConfig) -> List[Path]:
    """Table of u1var per parameter."""
    opts = cfg.options
    case = load_run_case(cfg)
    parameters = PARAMETERS if opts['parameter'] == 'all' else (opts['parameter'],)
    table = sensitivity_table(case, epsilon=opts['epsilon'], parameters=parameters,
                              targets=targets_from_text(opts.get('targets')), mode=opts['mode'])
    meta = cfg.to_metadata()
    written = []
    if cfg.wants('csv'):
        written.append(write_csv(table, cfg.artifact('sensitivity.csv'), meta))
    if cfg.wants('json'):
        doc = {'schema_version': OUTPUT_CONFIG['schema_version'], 'case': case.name,
               'u1var': dict(zip(table['parameter'], table['u1var'])), 'metadata': meta}
        written.append(write_json(doc, cfg.artifact('sensitivity.json')))
    return written


def cmd_simulate(cfg: RunConfig) -> List[Path]:
    """Simulate each disturbance and score zone coherence of the responses."""
    opts = cfg.options
    case = load_run_case(cfg)
    rd = reduced_dynamics(case)
    zr = zone_case(case, r=cfg.r, tau=cfg.tau, seed=cfg.seed, max_iter=cfg.max_iter)
    meta = cfg.to_metadata()

    written = []
    scores = []
    for bus_id in opts['bus']:
        d = DisturbanceSpec(bus_id=bus_id, kind=opts['kind'], size=opts['size'],
                            t_start=opts['t_start'], t_end=opts['t_end'])
        tr = simulate(rd, d, dt=opts['dt'], horizon=opts['horizon'], damping=opts['damping'])
        score = coherence_score(tr, zr)
        logger.info(f"Disturbance at bus {bus_id}: intra={format_number(score.intra)}, "
                    f"inter={format_number(score.inter)}")
        scores.append({
            'bus': bus_id,
            'intra': score.intra,
            'inter': score.inter,
            'n_intra': score.n_intra,
            'n_inter': score.n_inter,
            'peak_omega': {str(k): v for k, v in peak_response(tr).items()}
        })
        if cfg.wants('csv'):
            written.append(write_csv(tr.to_frame(), cfg.artifact(f'trajectory_bus{bus_id}.csv'),
                                     dict(meta, disturbance_bus=bus_id)))
    if cfg.wants('json'):
        doc = {'schema_version': OUTPUT_CONFIG['schema_version'], 'case': case.name, 'k': zr.k,
               'assignment': {str(b): z for b, z in zr.assignment.items()},
               'disturbances': scores, 'metadata': meta}
        written.append(write_json(doc, cfg.artifact('coherence.json')))
    return written


COMMANDS = {
    'zones': cmd_zones,
    'sweep': cmd_sweep,
    'sensitivity': cmd_sensitivity,
    'simulate': cmd_simulate
}


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--case', help='Case file (default: bundled IEEE 39-bus base case)')
    parser.add_argument('--scenario', help='Scenario file, or 1-4 for a bundled scenario')
    parser.add_argument('--r', type=int, default=ZONING_CONFIG['r'], help='Number of slow modes')
    parser.add_argument('--tau', type=float, default=ZONING_CONFIG['tau'], help='Auto-k relative tolerance')
    parser.add_argument('--seed', type=int, default=ZONING_CONFIG['seed'], help='Seed of the first centroid')
    parser.add_argument('--max-iter', type=int, default=ZONING_CONFIG['max_iter'], help='kmeans iteration cap')
    parser.add_argument('--out', default='.', help='Output directory')
    parser.add_argument('--formats', nargs='+', choices=FORMATS, help='Artifact formats (default: all)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='izone', description='Inertia zoning of power networks')
    sub = parser.add_subparsers(dest='command', required=True)

    zones = sub.add_parser('zones', help='Compute inertia zones, SEPs and SEDs')
    _add_shared(zones)

    sweep = sub.add_parser('sweep', help='Sweep the inertia constant of one generator')
    _add_shared(sweep)
    sweep.add_argument('--bus', type=int, required=True, help='Generator bus to sweep')
    sweep.add_argument('--h-from', type=float, default=2.0)
    sweep.add_argument('--h-to', type=float, default=6.0)
    sweep.add_argument('--h-step', type=float, default=1.0)
    sweep.add_argument('--highlight', type=int, nargs='*', help='Buses drawn prominently in the plot')

    sens = sub.add_parser('sensitivity', help='First-order DNW sensitivity to voltage, angle and inertia')
    _add_shared(sens)
    sens.add_argument('--parameter', choices=PARAMETERS + ('all',), default='all')
    sens.add_argument('--epsilon', type=float, default=SENSITIVITY_CONFIG['epsilon'])
    sens.add_argument('--targets', nargs='+', help="'each' (default), 'all' or bus ids")
    sens.add_argument('--mode', choices=MODES, default='relative')

    sim = sub.add_parser('simulate', help='Linearized swing simulation and zone coherence')
    _add_shared(sim)
    sim.add_argument('--bus', type=int, nargs='+', required=True, help='Disturbed bus (one run per bus)')
    sim.add_argument('--kind', choices=DISTURBANCE_KINDS, default='power_step')
    sim.add_argument('--size', type=float, default=0.1, help='Disturbance size in p.u.')
    sim.add_argument('--t-start', type=float, default=0.0)
    sim.add_argument('--t-end', type=float, default=0.1)
    sim.add_argument('--dt', type=float, default=SIMULATION_CONFIG['dt'])
    sim.add_argument('--horizon', type=float, default=SIMULATION_CONFIG['horizon'])
    sim.add_argument('--damping', type=float, default=SIMULATION_CONFIG['damping'])
    return parser


OPTION_KEYS = {
    'zones': (),
    'sweep': ('bus', 'h_from', 'h_to', 'h_step', 'highlight'),
    'sensitivity': ('parameter', 'epsilon', 'targets', 'mode'),
    'simulate': ('bus', 'kind', 'size', 't_start', 't_end', 'dt', 'horizon', 'damping')
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the izone command.

    Returns:
        0 on success, 1 on a domain error (error document on stderr),
        2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging()
    options = {key: getattr(args, key) for key in OPTION_KEYS[args.command]}
    cfg = RunConfig.from_args(args, options)
    try:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg)
    except Exception as e:
        doc = ErrorHandler.handle_domain_error(e)
        print(json.dumps(doc), file=sys.stderr)
        return 1

    logger.info(f"{args.command}: wrote {len(written)} artifact(s) to {cfg.out_dir}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
