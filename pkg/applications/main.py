#!/usr/bin/env python3
"""
DSG Referring Relationships
미분 가능한 장면 그래프(DSG) 실험 실행 파일 - 데이터 생성 / 학습 / 평가 / ablation
"""

import sys
import argparse
import logging
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import colorlog

# 프로젝트 루트 디렉토리를 Python 경로에 추가
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from modules.core.experiment_runner import ExperimentRunner
from modules.utils.config_manager import ABLATION_VARIANTS, GPI_MODES, ConfigManager
from modules.utils.errors import DsgError


def setup_logging(quiet=False):
    """통일된 로깅 설정 (진단 메시지는 stderr)"""
    level = logging.WARNING if quiet else logging.INFO
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(
        '%(log_color)s%(asctime)s - %(levelname)s - %(message)s' if not quiet else '%(log_color)s%(message)s',
        datefmt='%H:%M:%S'
    ))
    logging.basicConfig(level=level, handlers=[handler], force=True)
    return logging.getLogger(__name__)


def setup_argument_parser():
    """서브커맨드 인수 파서 설정"""
    parser = argparse.ArgumentParser(
        description="DSG referring-relationship 실험 도구",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
사용 예시:
  python main.py gen --out data/clevr                          # train/val/test 데이터셋 생성
  python main.py train --data data/clevr --out runs/dsg        # 학습 (체크포인트 + 지표 로그)
  python main.py train --data data/clevr --out runs/nodsg --ablation no-dsg
  python main.py train --data data/clevr --out runs/dsg --resume    # epochs 를 늘려 이어서 학습
  python main.py eval --model runs/dsg --data data/clevr --render-dir runs/dsg/renders
  python main.py ablate --data data/clevr --out runs/ablation  # 다섯 변형 비교표
  DSG_THREADS=4 python main.py gen --out data/clevr            # 병렬 워커 4개
        """
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, config=True, seed=True):
        if config:
            sub.add_argument("--config", type=Path, default=None, help="실험 설정 파일 (기본값 위에 덮어씀)")
        if seed:
            sub.add_argument("--seed", type=int, default=None, help="설정의 seed 덮어쓰기")
        sub.add_argument("--quiet", "-q", action="store_true", help="최소한의 출력만 표시")

    gen = subparsers.add_parser("gen", help="합성 데이터셋 생성")
    add_common(gen)
    gen.add_argument("--out", type=Path, required=True, help="데이터셋 출력 디렉터리")

    train = subparsers.add_parser("train", help="모델 학습")
    add_common(train)
    train.add_argument("--data", type=Path, required=True, help="데이터셋 디렉터리")
    train.add_argument("--out", type=Path, required=True, help="실행 결과 디렉터리")
    train.add_argument("--ablation", choices=ABLATION_VARIANTS, default=None, help="ablation 변형")
    train.add_argument("--mode", choices=GPI_MODES, default=None, help="GPI 집계 방식")
    train.add_argument("--resume", action="store_true",
                       help="--out 실행 디렉터리의 체크포인트/학습 상태에서 이어서 학습")

    evaluate = subparsers.add_parser("eval", help="학습된 모델 평가")
    add_common(evaluate, seed=False)
    evaluate.add_argument("--model", type=Path, required=True, help="학습 실행 디렉터리 (config.cfg, checkpoint.dsg)")
    evaluate.add_argument("--data", type=Path, required=True, help="데이터셋 디렉터리")
    evaluate.add_argument("--render-dir", type=Path, default=None, help="주의 맵/박스 렌더링 출력 디렉터리")

    ablate = subparsers.add_parser("ablate", help="다섯 가지 변형 비교")
    add_common(ablate)
    ablate.add_argument("--data", type=Path, required=True, help="데이터셋 디렉터리")
    ablate.add_argument("--out", type=Path, required=True, help="비교표 출력 디렉터리")
    ablate.add_argument("--mode", choices=GPI_MODES, default=None, help="GPI 집계 방식")

    return parser


def build_config(args) -> ConfigManager:
    """설정 파일 + 명령행 덮어쓰기"""
    config = ConfigManager(config_path=args.config)
    if getattr(args, "seed", None) is not None:
        config.set("seed", args.seed)
    if getattr(args, "mode", None) is not None:
        config.set("gpi_mode", args.mode)
    if getattr(args, "ablation", None) is not None:
        config.apply_variant(args.ablation)
    return config


def run_command(args, logger) -> None:
    config = build_config(args)
    runner = ExperimentRunner(config)

    if args.command == "gen":
        paths = runner.generate_dataset(args.out)
        for name, path in paths.items():
            logger.info(f"📁 {name}: {path}")

    elif args.command == "train":
        artifacts = runner.train(args.data, args.out, resume=args.resume)
        result = artifacts.result
        logger.info(f"✅ 학습 완료: 손실 {result.initial_loss:.4f} → {result.final_loss:.4f} ({artifacts.run_dir})")

    elif args.command == "eval":
        report = runner.evaluate(args.model, args.data, args.render_dir)
        logger.info(f"📄 평가 리포트: {args.model / 'eval_report.json'}")
        print(f"subject_iou={report.rr.subject_iou:.4f} object_iou={report.rr.object_iou:.4f}")

    elif args.command == "ablate":
        runner.ablate(args.data, args.out)
        print((args.out / "ablation.txt").read_text(encoding="utf-8"), end="")


def main(argv: Optional[List[str]] = None) -> bool:
    """메인 실행 함수 (성공 여부 반환)"""
    parser = setup_argument_parser()
    args = parser.parse_args(argv)
    logger = setup_logging(args.quiet)

    if not args.quiet:
        logger.info(f"🚀 DSG 실험 도구: {args.command}")
        logger.info(f"⏰ 실행 시간: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")

    try:
        run_command(args, logger)
        return True
    except KeyboardInterrupt:
        logger.warning("⚠️ 사용자에 의해 중단되었습니다.")
        return False
    except (DsgError, OSError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
