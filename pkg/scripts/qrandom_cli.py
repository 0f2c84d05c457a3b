#!/usr/bin/env python3
"""
qrandom 命令行入口：chsh / extract / qrng / protocol

退出码：0 成功，2 协议中止，3 配置或参数错误，4 I/O 错误
"""
import hashlib
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import click
import numpy as np
from loguru import logger
from pydantic import ValidationError

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.certification import certify
from src.core.extraction import (extractable_length, inner_product_extract_blocks,
                                 toeplitz_extract_blocks, toeplitz_seed_length)
from src.core.nonlocality import (check_no_signaling, chsh_functional,
                                  evaluate_functional, local_bound, simulate_rounds)
from src.core.phase_diffusion import fit_variance_scaling, qrng_pipeline
from src.core.protocols import SeedSource, run_amplification, run_expansion
from src.core.sources import build_sv_model
from src.devices import make_device_pair
from src.models.config import LoggingConfig, RunConfig
from src.models.errors import ConfigError, DeviceNonResponseError, SeedExhaustedError
from src.utils.bits import atomic_write_many, pack_bits, read_bits
from src.utils.formats import format_behavior_table, format_key_value, read_calibration_csv, report_to_dict
from src.utils.rng import STREAM_EXTRACTOR_SEED, random_bits

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_CONFIG = 3
EXIT_IO = 4

PendingFiles = List[Tuple[Path, bytes]]


def setup_logging(config: LoggingConfig, verbose: bool = False):
    """设置日志"""
    level = "DEBUG" if verbose else config.level

    # 配置 loguru
    logger.remove()  # 移除默认处理器

    # 添加控制台输出（stdout 留给命令本身）
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
    )

    # 添加文件输出
    if config.file:
        Path(config.file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            config.file,
            level=level,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            rotation=config.max_file_size,
            retention=config.backup_count
        )


def digest(bits: np.ndarray) -> str:
    return hashlib.sha256(pack_bits(bits)).hexdigest()


def add_report(pending: PendingFiles, out_dir: Path, name: str, report: Union[dict, object]):
    """报告同时以 JSON 和 key = value 文本输出"""
    data = report_to_dict(report)
    pending.append((out_dir / f"{name}.json", (json.dumps(data, ensure_ascii=False, indent=2) + "\n").encode("utf-8")))
    pending.append((out_dir / f"{name}.txt", format_key_value(data).encode("utf-8")))


def write_all(pending: PendingFiles):
    """所有计算完成后一次性写出，任何一个文件失败时都不留下输出"""
    atomic_write_many(pending)
    for path, _ in pending:
        logger.info(f"Wrote {path}")


def load_config(config_path: str, command: str, seed: Optional[int], out: Optional[str],
                threads: Optional[int], verbose: bool) -> RunConfig:
    run_config = RunConfig.load_from_file(config_path).with_overrides(seed, out, threads)
    setup_logging(run_config.logging, verbose)
    if run_config.command != command:
        raise ConfigError(f"Config {config_path} describes a '{run_config.command}' run, not '{command}'")
    logger.info(f"Running {command} with seed={run_config.seed}, threads={run_config.threads}")
    return run_config


def execute(command: str, runner, config_path: str, seed: Optional[int], out: Optional[str],
            threads: Optional[int], verbose: bool):
    """统一的错误处理与退出码映射"""
    try:
        run_config = load_config(config_path, command, seed, out, threads, verbose)
        pending, exit_code = runner(run_config, Path(run_config.output_dir))
        write_all(pending)
    except (ConfigError, ValidationError, SeedExhaustedError, DeviceNonResponseError) as e:
        logger.error(f"Invalid configuration: {e}")
        sys.exit(EXIT_CONFIG)
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        sys.exit(EXIT_IO)
    except ValueError as e:
        logger.error(f"Invalid parameters: {e}")
        sys.exit(EXIT_CONFIG)
    if exit_code != EXIT_OK:
        sys.exit(exit_code)


def run_chsh(run_config: RunConfig, out_dir: Path):
    cfg = run_config.chsh
    alice, _ = make_device_pair(cfg.device)
    behavior = alice.implemented_behavior()
    distribution = None if cfg.settings_distribution is None else np.array(cfg.settings_distribution).reshape(2, 2)

    records = simulate_rounds(behavior, distribution, cfg.rounds, run_config.seed, run_config.threads)
    report = certify(records, confidence=cfg.confidence, settings_distribution=distribution)
    functional = chsh_functional()
    no_signaling = check_no_signaling(behavior)

    summary = report_to_dict(report)
    summary.update({
        "device": cfg.device.kind,
        "s_exact": evaluate_functional(functional, behavior),
        "vertex_bound": local_bound(functional),
        "no_signaling_passed": no_signaling.passed,
        "seed": run_config.seed,
    })
    logger.info(f"S_hat={report.s_hat:.6f}, S_lo={report.s_lo:.6f}, f(S_lo)={report.bits_per_round:.6f}")

    pending: PendingFiles = []
    add_report(pending, out_dir, "chsh-report", summary)
    pending.append((out_dir / "behavior.txt", format_behavior_table(behavior).encode("utf-8")))
    return pending, EXIT_OK


def run_extract(run_config: RunConfig, out_dir: Path):
    cfg = run_config.extract
    x = read_bits(cfg.input, cfg.input_length)
    summary: Dict[str, object] = {"mode": cfg.mode, "input_bits": int(x.size)}

    if cfg.mode == "inner-product":
        y = read_bits(cfg.second_input, cfg.input_length)
        if y.size != x.size:
            raise ConfigError(f"Inner-product inputs differ in length: {x.size} vs {y.size}")
        block_length = cfg.block_length or x.size
        if block_length > x.size:
            raise ConfigError(f"Block length {block_length} exceeds the {x.size} input bits")
        output = inner_product_extract_blocks(x, y, block_length)
    else:
        block_length = cfg.block_length or x.size
        blocks = x.size // block_length
        if blocks == 0:
            raise ConfigError(f"Block length {block_length} exceeds the {x.size} input bits")
        output_length = cfg.output_length or extractable_length(block_length, cfg.min_entropy_per_bit, cfg.epsilon)
        if output_length == 0:
            raise ConfigError("Configured min-entropy leaves no extractable output")
        if output_length > block_length:
            raise ConfigError(f"Output length {output_length} exceeds block length {block_length}")
        needed = toeplitz_seed_length(block_length, output_length) * (1 if cfg.reuse_seed else blocks)
        if cfg.seed_file:
            seed_bits = read_bits(cfg.seed_file)[:needed]
        else:
            seed_bits = random_bits(run_config.seed, STREAM_EXTRACTOR_SEED, needed)
        output = toeplitz_extract_blocks(x, block_length, output_length, seed_bits,
                                         reuse_seed=cfg.reuse_seed, threads=run_config.threads)
        summary.update({"block_length": block_length, "output_length_per_block": output_length,
                        "seed_bits": needed})

    summary.update({"output_bits": int(output.size), "output_sha256": digest(output)})
    logger.info(f"Extracted {output.size} bits from {x.size} input bits ({cfg.mode})")
    pending: PendingFiles = [(out_dir / "extracted.bin", pack_bits(output))]
    add_report(pending, out_dir, "extract-report", summary)
    return pending, EXIT_OK


def run_qrng(run_config: RunConfig, out_dir: Path):
    cfg = run_config.qrng
    raw, budget, extracted = qrng_pipeline(cfg.pulse, cfg.noise, cfg.digitizer, cfg.kappa, cfg.pulses,
                                           run_config.seed, cfg.epsilon, run_config.threads,
                                           cfg.compensate_hangover)
    summary = report_to_dict(budget)
    summary.update({
        "pulses": cfg.pulses,
        "raw_bits": int(raw.size),
        "raw_ones_fraction": float(raw.mean()),
        "extracted_bits": int(extracted.size),
        "raw_sha256": digest(raw),
        "extracted_sha256": digest(extracted),
    })
    if cfg.calibration_csv:
        summary["variance_fit"] = report_to_dict(fit_variance_scaling(read_calibration_csv(cfg.calibration_csv)))

    pending: PendingFiles = [
        (out_dir / "raw.bin", pack_bits(raw)),
        (out_dir / "extracted.bin", pack_bits(extracted)),
    ]
    add_report(pending, out_dir, "qrng-report", summary)
    return pending, EXIT_OK


def run_protocol(run_config: RunConfig, out_dir: Path):
    cfg = run_config.protocol
    pairs = [make_device_pair(spec) for spec in cfg.device_specs()]

    if cfg.kind == "expansion":
        seed_source = SeedSource(run_config.seed, budget=cfg.expansion.seed_budget)
        result = run_expansion(pairs[0], cfg.expansion, seed_source, run_config.seed, run_config.threads)
    else:
        amp = cfg.amplification
        sv = build_sv_model(amp.epsilon, amp.strategy, amp.strategy_params)
        devices = [box for pair in pairs for box in pair]
        result = run_amplification(sv, devices, amp, run_config.seed, run_config.seed, run_config.threads)

    summary = report_to_dict(result.report)
    summary["output_sha256"] = digest(result.output_bits)
    pending: PendingFiles = []
    add_report(pending, out_dir, "protocol-report", summary)
    if result.report.aborted:
        logger.error(f"Protocol aborted: {result.report.abort_reason}")
        return pending, EXIT_ABORT
    pending.append((out_dir / "output.bin", pack_bits(result.output_bits)))
    return pending, EXIT_OK


def common_options(func):
    """各子命令共享的参数"""
    func = click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')(func)
    func = click.option('--threads', '-t', type=click.IntRange(min=1), default=None,
                        help='Worker threads (results do not depend on it)')(func)
    func = click.option('--out', '-o', default=None, help='Output directory (default: from config)')(func)
    func = click.option('--seed', '-s', type=click.IntRange(0, (1 << 64) - 1), default=None,
                        help='Global seed (default: from config)')(func)
    func = click.option('--config', '-c', required=True, help='Run configuration file path')(func)
    return func


@click.group()
def cli():
    """量子随机性工具箱"""


@cli.command()
@common_options
def chsh(config, seed, out, threads, verbose):
    """模拟 CHSH 检验并认证随机性"""
    execute("chsh", run_chsh, config, seed, out, threads, verbose)


@cli.command()
@common_options
def extract(config, seed, out, threads, verbose):
    """对位文件做内积或 Toeplitz 提取"""
    execute("extract", run_extract, config, seed, out, threads, verbose)


@cli.command()
@common_options
def qrng(config, seed, out, threads, verbose):
    """相位扩散 QRNG 模拟、熵预算与提取"""
    execute("qrng", run_qrng, config, seed, out, threads, verbose)


@cli.command()
@common_options
def protocol(config, seed, out, threads, verbose):
    """运行随机性扩展或放大协议"""
    execute("protocol", run_protocol, config, seed, out, threads, verbose)


def main(argv: Optional[List[str]] = None):
    """控制台入口：命令行用法错误也按配置错误（3）退出"""
    try:
        cli.main(args=argv, prog_name="qrandom", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(EXIT_CONFIG)


if __name__ == "__main__":
    main()
