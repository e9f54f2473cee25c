#!/usr/bin/env python3
"""
프로젝트 초기 설정 스크립트
새로운 환경에서 필요한 폴더들과 실험 설정 템플릿을 생성합니다.
"""
from pathlib import Path


def create_data_structure():
    """데이터/실행 결과 폴더 구조 생성"""
    folders = [
        "data",
        "runs",
    ]

    for folder in folders:
        Path(folder).mkdir(parents=True, exist_ok=True)
        print(f"✅ 폴더 생성: {folder}")


def create_config_template():
    """로컬 실험 설정 템플릿 생성 (기본값에서 바꿀 키만 적으면 됨)"""
    template_path = Path("config/local_experiment.cfg.example")
    template_path.parent.mkdir(parents=True, exist_ok=True)
    template_path.write_text(
        "# 로컬 실험 설정 - config/default_experiment.cfg 위에 덮어씁니다\n"
        "# seed=0\n"
        "# n_train=2000\n"
        "# epochs=12\n"
        "# gpi_mode=attention\n",
        encoding="utf-8",
    )
    print(f"✅ 설정 템플릿 생성: {template_path}")
    print("📝 실제 사용 시: cp config/local_experiment.cfg.example config/local_experiment.cfg")


if __name__ == "__main__":
    print("🚀 DSG Referring Relationships 프로젝트 초기 설정")
    print("=" * 60)

    create_data_structure()
    create_config_template()

    print("\n🎉 프로젝트 초기 설정 완료!")
    print("\n📋 다음 단계:")
    print("1. pip install -r requirements.txt")
    print("2. python applications/main.py gen --out data/clevr")
    print("3. python applications/main.py train --data data/clevr --out runs/dsg")
