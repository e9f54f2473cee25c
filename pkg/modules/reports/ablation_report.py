"""
ablation 비교표 생성 (JSON / 정렬된 텍스트 / Excel)
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Union

import pandas as pd

from modules.reports.evaluator import EvalReport

VARIANT_LABELS = {
    "dsg": "DSG",
    "two-step": "Two-step",
    "no-sgl": "DSG -SGL",
    "no-br": "DSG -BR",
    "no-dsg": "no-DSG",
}

COLUMNS = ["variant", "subject_iou", "subject_iou_se", "object_iou", "object_iou_se",
           "entity_acc", "relation_acc", "n_queries"]


def ablation_frame(reports: Mapping[str, EvalReport]) -> pd.DataFrame:
    """변형 이름 → 평가 리포트 를 표로 (입력 순서 유지)"""
    rows = []
    for variant, report in reports.items():
        values = report.to_dict()
        rows.append({"variant": VARIANT_LABELS.get(variant, variant),
                     **{c: values[c] for c in COLUMNS[1:]}})
    return pd.DataFrame(rows, columns=COLUMNS)


def format_table(frame: pd.DataFrame) -> str:
    """'평균 ± 표준오차' 형식의 정렬된 텍스트 표"""
    def _fmt(value) -> str:
        return "n/a" if value is None or pd.isna(value) else f"{value:.4f}"

    display = pd.DataFrame({
        "variant": frame["variant"],
        "subject IOU": [f"{m:.4f} ± {s:.4f}" for m, s in zip(frame["subject_iou"], frame["subject_iou_se"])],
        "object IOU": [f"{m:.4f} ± {s:.4f}" for m, s in zip(frame["object_iou"], frame["object_iou_se"])],
        "entity acc": [_fmt(v) for v in frame["entity_acc"]],
        "relation acc": [_fmt(v) for v in frame["relation_acc"]],
        "queries": frame["n_queries"],
    })
    return display.to_string(index=False) + "\n"


class AblationReporter:
    """ablation 결과 저장 클래스"""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger(__name__)

    def save(self, reports: Mapping[str, EvalReport]) -> Dict[str, Path]:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        frame = ablation_frame(reports)
        paths = {
            "json": self.output_dir / "ablation.json",
            "text": self.output_dir / "ablation.txt",
            "xlsx": self.output_dir / "ablation.xlsx",
        }
        records: List[dict] = [{"variant": VARIANT_LABELS.get(v, v), **r.to_dict()} for v, r in reports.items()]
        paths["json"].write_text(json.dumps(records, ensure_ascii=False, indent=2), encoding="utf-8")
        paths["text"].write_text(format_table(frame), encoding="utf-8")
        self.save_excel(frame, paths["xlsx"])
        self.logger.info(f"💾 ablation 비교표 저장: {self.output_dir} ({len(frame)}개 변형)")
        return paths

    def save_excel(self, frame: pd.DataFrame, output_path: Path) -> Path:
        with pd.ExcelWriter(output_path, engine='xlsxwriter') as writer:
            frame.to_excel(writer, sheet_name="ablation", index=False)
            worksheet = writer.sheets["ablation"]
            number_format = writer.book.add_format({"num_format": "0.0000"})
            worksheet.set_column(0, 0, 12)
            worksheet.set_column(1, len(COLUMNS) - 2, 14, number_format)
            worksheet.set_column(len(COLUMNS) - 1, len(COLUMNS) - 1, 10)
        self.logger.debug(f"시트 저장 완료: ablation ({len(frame)}행)")
        return output_path
