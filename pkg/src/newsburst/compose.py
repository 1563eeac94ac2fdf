"""Turn a published cluster into a post: representative article, caption and framed image."""
from __future__ import annotations

import hashlib
import io
import re
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont, UnidentifiedImageError

from . import kernels
from .ingest import INTERNATIONAL
from .score import PostCategory

DESCRIPTION_CAP = 2000
ELLIPSIS = "…"
# cosines closer than this are treated as a tie
TIE_TOLERANCE = 1e-12

DEFAULT_PALETTE = {
    "blue": (23, 86, 170),
    "orange": (240, 128, 30),
    "yellow": (250, 200, 20),
}
LARGE = "Large"
SMALL = "Small"


class DecodeFailed(ValueError):
    pass


class FontMissing(FileNotFoundError):
    pass


def bundled_font() -> Path:
    return Path(str(resources.files("newsburst") / "data" / "fonts" / "Roboto-Bold.ttf"))


def bundled_placeholder() -> Path:
    return Path(str(resources.files("newsburst") / "data" / "placeholder.png"))


@dataclass(frozen=True)
class FontRules:
    path: str | None = None
    tier_threshold: int = 60
    large_pt: float = 64
    small_pt: float = 44
    reference_side: int = 1080
    frame_ratio: float = 0.04
    max_lines: int = 4

    def font_path(self) -> Path:
        return Path(self.path) if self.path else bundled_font()


@dataclass(frozen=True)
class ImageSpec:
    source_image_url: str
    crop: tuple[int, int, int]  # x, y, side
    frame_name: str
    frame_color: tuple[int, int, int]
    frame_width: int
    title_text: str
    font_tier: str
    text_anchor: str = "bottom-left"

    def to_dict(self) -> dict:
        return {
            "source_image_url": self.source_image_url,
            "crop": list(self.crop),
            "frame_name": self.frame_name,
            "frame_color": list(self.frame_color),
            "frame_width": self.frame_width,
            "title_text": self.title_text,
            "font_tier": self.font_tier,
            "text_anchor": self.text_anchor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageSpec":
        return cls(
            d["source_image_url"], tuple(d["crop"]), d["frame_name"], tuple(d["frame_color"]),
            d["frame_width"], d["title_text"], d["font_tier"], d.get("text_anchor", "bottom-left"),
        )


@dataclass(frozen=True)
class Post:
    post_id: str
    representative_article_id: str
    title: str
    description: str
    image: ImageSpec
    category: PostCategory
    link: str
    hashtags: tuple[str, ...] = ()
    created_at: datetime | None = None
    members: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.title or not self.description:
            raise ValueError("post needs a title and a description")

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "representative_article_id": self.representative_article_id,
            "title": self.title,
            "description": self.description,
            "image": self.image.to_dict(),
            "category": {"region": self.category.region, "important": self.category.important},
            "link": self.link,
            "hashtags": list(self.hashtags),
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "members": list(self.members),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Post":
        return cls(
            post_id=d["post_id"],
            representative_article_id=d["representative_article_id"],
            title=d["title"],
            description=d["description"],
            image=ImageSpec.from_dict(d["image"]),
            category=PostCategory(d["category"]["region"], d["category"]["important"]),
            link=d["link"],
            hashtags=tuple(d.get("hashtags", ())),
            created_at=datetime.fromisoformat(d["created_at"]) if d.get("created_at") else None,
            members=tuple(d.get("members", ())),
        )


def select_representative(members, vectors) -> str:
    """Id of the member whose vector points closest to the members' mean vector.

    ``members`` are article ids (or objects with ``article_id``); ``vectors``
    is any iterable of article vectors covering them.
    """
    ids = sorted(getattr(m, "article_id", m) for m in members)
    if not ids:
        raise ValueError("empty cluster")
    by_id = {av.article_id: av.v for av in vectors}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise KeyError(f"no vector for {missing}")
    cos = kernels.cosine_to_mean(np.vstack([by_id[i] for i in ids]))
    best = cos.max()
    # ids are sorted, so the first near-maximal entry is the lowest id
    return ids[int(np.flatnonzero(cos >= best - TIE_TOLERANCE)[0])]


_PARAGRAPH_BREAK = re.compile(r"\n[ \t\r\f\v]*\n")


def truncate_words(text: str, limit: int) -> str:
    """``text`` cut to at most ``limit`` characters including a trailing ellipsis,
    at a word boundary where one exists."""
    if len(text) <= limit:
        return text
    room = limit - len(ELLIPSIS)
    if room <= 0:
        return ELLIPSIS[:limit]
    head = text[:room]
    if not text[room].isspace():
        cut = max(head.rfind(" "), head.rfind("\n"), head.rfind("\t"))
        if cut > 0:
            head = head[:cut]
    return head.rstrip() + ELLIPSIS


def first_paragraph(body: str, cap: int = DESCRIPTION_CAP) -> str:
    text = body.strip()
    m = _PARAGRAPH_BREAK.search(text)
    if m:
        text = text[: m.start()].rstrip()
    return truncate_words(text, cap)


def compose_image_spec(
    article,
    category: PostCategory,
    image_dims: tuple[int, int],
    palette: dict = DEFAULT_PALETTE,
    font_rules: FontRules = FontRules(),
    source_image_url: str | None = None,
) -> ImageSpec:
    w, h = image_dims
    if w < 1 or h < 1:
        raise ValueError(f"bad image size {image_dims}")
    side = min(w, h)
    if category.important:
        name = "yellow"
    elif category.region == INTERNATIONAL:
        name = "orange"
    else:
        name = "blue"
    tier = LARGE if len(article.title) <= font_rules.tier_threshold else SMALL
    return ImageSpec(
        source_image_url=source_image_url or article.image_url or "",
        crop=((w - side) // 2, (h - side) // 2, side),
        frame_name=name,
        frame_color=tuple(palette[name]),
        frame_width=max(1, round(side * font_rules.frame_ratio)),
        title_text=article.title,
        font_tier=tier,
    )


def _wrap(draw, text: str, font, width: float, max_lines: int) -> list[str]:
    lines: list[str] = []
    current = ""
    for word in text.split():
        trial = f"{current} {word}".strip()
        if not current or draw.textlength(trial, font=font) <= width:
            current = trial
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    if len(lines) > max_lines:
        lines = lines[:max_lines]
        last = lines[-1]
        while last and draw.textlength(last + ELLIPSIS, font=font) > width:
            last = last.rsplit(" ", 1)[0] if " " in last else last[:-1]
        lines[-1] = last + ELLIPSIS
    return lines


def render_image(spec: ImageSpec, image_bytes: bytes, font_rules: FontRules = FontRules()) -> bytes:
    """Cropped square with an inset frame and the title at bottom left, as PNG."""
    try:
        src = Image.open(io.BytesIO(image_bytes))
        src.load()
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeFailed(str(e)) from e
    x, y, side = spec.crop
    if x < 0 or y < 0 or x + side > src.width or y + side > src.height:
        raise ValueError(f"crop {spec.crop} outside {src.width}x{src.height} image")
    font_path = font_rules.font_path()
    if not font_path.is_file():
        raise FontMissing(str(font_path))

    img = src.convert("RGB").crop((x, y, x + side, y + side))
    draw = ImageDraw.Draw(img)
    fw = spec.frame_width
    draw.rectangle((0, 0, side - 1, side - 1), outline=tuple(spec.frame_color), width=fw)

    pt = font_rules.large_pt if spec.font_tier == LARGE else font_rules.small_pt
    size = max(8, round(pt * side / font_rules.reference_side))
    font = ImageFont.truetype(str(font_path), size)
    margin = fw + max(4, round(side * 0.03))
    lines = _wrap(draw, spec.title_text, font, side - 2 * margin, font_rules.max_lines)
    line_h = round(size * 1.15)
    baseline = side - margin
    stroke = max(1, size // 14)
    for line in reversed(lines):
        draw.text((margin, baseline), line, font=font, fill=(255, 255, 255), anchor="ld",
                  stroke_width=stroke, stroke_fill=(0, 0, 0))
        baseline -= line_h

    out = io.BytesIO()
    img.save(out, format="PNG", compress_level=6)
    return out.getvalue()


def post_id_for(representative_article_id: str) -> str:
    return "p-" + hashlib.sha256(representative_article_id.encode("utf-8")).hexdigest()[:16]


def normalize_hashtags(tags) -> tuple[str, ...]:
    out = []
    for t in tags or ():
        t = t.strip().lstrip("#").replace(" ", "")
        if t and f"#{t}" not in out:
            out.append(f"#{t}")
    return tuple(out)


def build_post(
    cluster,
    articles,
    vectors,
    category: PostCategory,
    hashtags,
    now: datetime,
    *,
    image_dims: tuple[int, int] = (1080, 1080),
    palette: dict = DEFAULT_PALETTE,
    font_rules: FontRules = FontRules(),
    placeholder_url: str | None = None,
) -> Post:
    """``articles`` maps article id to article; ``cluster`` has ``members``."""
    members = sorted(cluster.members)
    rep_id = select_representative(members, vectors)
    rep = articles[rep_id]
    source_url = rep.image_url or placeholder_url or bundled_placeholder().as_uri()
    spec = compose_image_spec(rep, category, image_dims, palette, font_rules, source_url)
    return Post(
        post_id=post_id_for(rep_id),
        representative_article_id=rep_id,
        title=rep.title,
        description=first_paragraph(rep.body),
        image=spec,
        category=category,
        link=rep.url,
        hashtags=normalize_hashtags(hashtags),
        created_at=now,
        members=tuple(members),
    )

