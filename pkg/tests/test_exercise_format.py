"""Document parsing, block extraction, and feedback-merge round trips."""

import io
import zipfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autofeedback.exercise_format import (
    AnswerBlock,
    DuplicateAnswerId,
    ExercisePaper,
    GradeBlockMismatch,
    GradedFeedback,
    InvalidPointsToken,
    MarkerIdMismatch,
    MalformedMarkup,
    MissingContentPart,
    NoAnswerBlocks,
    NotAnOdtContainer,
    UnmatchedEndMarker,
    UnmatchedStartMarker,
    extract_blocks,
    format_points,
    is_marker_line,
    merge_feedback,
    parse_odt,
)

from conftest import make_odt


def scan_blocks(text):
    """Independent line-scanner oracle for marker pairs.

    Deliberately dumb: walks lines once, tracks one open block, and collects
    (id, points_token, answer_lines). Used to cross-check extract_blocks on
    fixtures that contain no feedback sections or placeholders.
    """
    found = []
    open_id = None
    answer = []
    for line in text.splitlines():
        parts = line.strip().split()
        if (
            len(parts) >= 6
            and parts[0] == "##"
            and parts[1] == "Answer"
            and parts[3] == "Start"
            and parts[4] == "##"
            and parts[5].startswith("POINTS:")
        ):
            token = parts[6] if parts[5] == "POINTS:" else parts[5][len("POINTS:"):]
            open_id = parts[2]
            points = token
            answer = []
        elif len(parts) == 5 and parts[0] == "##" and parts[1] == "Answer" and parts[3] == "End":
            if parts[2] == open_id:
                found.append((open_id, points, list(answer)))
                open_id = None
        elif open_id is not None:
            answer.append(line)
    return found


# --- parse_odt ---------------------------------------------------------------


def test_single_paragraph_identity():
    assert parse_odt(make_odt(["hello"])) == "hello\n"


def test_example_question_flattens_with_marker_line(example_document):
    text = parse_odt(example_document)
    assert "## Answer 8.1a Start ##  POINTS: 4 ##" in text.splitlines()


def test_truncated_archive_rejected(example_document):
    with pytest.raises(NotAnOdtContainer):
        parse_odt(example_document[: len(example_document) // 2])


def test_missing_content_entry():
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w") as archive:
        archive.writestr("mimetype", "application/vnd.oasis.opendocument.text")
    with pytest.raises(MissingContentPart):
        parse_odt(buffer.getvalue())


def test_unparseable_content():
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w") as archive:
        archive.writestr("content.xml", "<open><and never closed>")
    with pytest.raises(MalformedMarkup):
        parse_odt(buffer.getvalue())


def test_line_break_tab_and_space_runs():
    ns_text = "urn:oasis:names:tc:opendocument:xmlns:text:1.0"
    ns_office = "urn:oasis:names:tc:opendocument:xmlns:office:1.0"
    content = (
        '<?xml version="1.0"?>'
        f'<office:document-content xmlns:office="{ns_office}" xmlns:text="{ns_text}">'
        "<office:body><office:text>"
        '<text:p>a<text:line-break/>b<text:tab/>c<text:s text:c="3"/>d</text:p>'
        "<text:h>heading</text:h>"
        "<text:p>x<office:annotation><text:p>reviewer note</text:p></office:annotation>y</text:p>"
        "</office:text></office:body></office:document-content>"
    )
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w") as archive:
        archive.writestr("content.xml", content)
    assert parse_odt(buffer.getvalue()) == "a\nb\tc   d\nheading\nxy\n"


def test_parse_is_pure(example_document):
    assert parse_odt(example_document) == parse_odt(example_document)


# --- extract_blocks ----------------------------------------------------------


def test_example_question_block(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    assert len(paper.blocks) == 1
    block = paper.blocks[0]
    assert block.answer_id == "8.1a"
    assert block.max_points == 4
    assert block.student_answer == ""
    assert block.question_text.startswith("Question 8.1a)")


def test_two_blocks_against_line_scanner_oracle():
    lines = [
        "Intro text",
        "## Answer 1a Start ## POINTS: 2 ##",
        "X",
        "## Answer 1a End ##",
        "Second question",
        "## Answer 1b Start ## POINTS: 3.5 ##",
        "Y",
        "## Answer 1b End ##",
    ]
    text = "\n".join(lines) + "\n"
    paper = extract_blocks(text, 1)
    oracle = scan_blocks(text)
    assert [(b.answer_id, format_points(b.max_points), b.student_answer.splitlines()) for b in paper.blocks] == [
        (i, p, a) for i, p, a in oracle
    ]
    assert [b.student_answer for b in paper.blocks] == ["X", "Y"]
    assert paper.blocks[1].question_text == "Second question"


def test_marker_id_mismatch():
    text = "## Answer 8.1a Start ## POINTS: 4 ##\nfoo\n## Answer 8.1b End ##\n"
    with pytest.raises(MarkerIdMismatch) as err:
        extract_blocks(text, 8)
    assert (err.value.start_id, err.value.end_id) == ("8.1a", "8.1b")


def test_unmatched_start_and_end():
    with pytest.raises(UnmatchedStartMarker):
        extract_blocks("## Answer 1a Start ## POINTS: 1 ##\nanswer\n", 1)
    with pytest.raises(UnmatchedEndMarker):
        extract_blocks("stray\n## Answer 1a End ##\n", 1)
    with pytest.raises(UnmatchedStartMarker):
        extract_blocks(
            "## Answer 1a Start ## POINTS: 1 ##\n## Answer 1b Start ## POINTS: 1 ##\n", 1
        )


def test_duplicate_answer_id():
    text = (
        "## Answer 1a Start ## POINTS: 1 ##\nx\n## Answer 1a End ##\n"
        "## Answer 1a Start ## POINTS: 1 ##\ny\n## Answer 1a End ##\n"
    )
    with pytest.raises(DuplicateAnswerId):
        extract_blocks(text, 1)


@pytest.mark.parametrize("token", ["0", "-1", "4.25", "0.3", "abc", "1.", "nan"])
def test_invalid_points_tokens(token):
    text = f"## Answer 1a Start ## POINTS: {token} ##\nx\n## Answer 1a End ##\n"
    with pytest.raises(InvalidPointsToken):
        extract_blocks(text, 1)


def test_no_blocks_at_all():
    with pytest.raises(NoAnswerBlocks):
        extract_blocks("just prose, no markers\n", 1)


def test_marker_text_mid_line_is_not_a_marker():
    text = (
        "## Answer 1a Start ## POINTS: 1 ##\n"
        "I would quote ## Answer 1a End ## as syntax here\n"
        "## Answer 1a End ##\n"
    )
    paper = extract_blocks(text, 1)
    assert paper.blocks[0].student_answer == "I would quote ## Answer 1a End ## as syntax here"


def test_placeholder_line_counts_as_empty():
    text = "## Answer 1a Start ## POINTS: 1 ##\n  <YOUR ANSWER HERE>  \n## Answer 1a End ##\n"
    assert extract_blocks(text, 1).blocks[0].student_answer == ""


def test_whitespace_variance_in_markers():
    text = "##  Answer  q-7  Start  ##   POINTS:  2.5  ##\nans\n##  Answer  q-7  End  ##\n"
    block = extract_blocks(text, 3).blocks[0]
    assert (block.answer_id, block.max_points) == ("q-7", 2.5)


# --- type invariants ---------------------------------------------------------


def test_answer_block_invariants():
    with pytest.raises(ValueError):
        AnswerBlock(answer_id="a b", question_text="", max_points=1, student_answer="")
    with pytest.raises(ValueError):
        AnswerBlock(answer_id="a", question_text="", max_points=0.3, student_answer="")
    with pytest.raises(ValueError):
        AnswerBlock(answer_id="a", question_text="", max_points=0, student_answer="")


def test_paper_invariants():
    block = AnswerBlock(answer_id="a", question_text="", max_points=1, student_answer="")
    with pytest.raises(ValueError):
        ExercisePaper(exercise_id=0, blocks=(block,), source_text="")
    with pytest.raises(ValueError):
        ExercisePaper(exercise_id=1, blocks=(block, block), source_text="")


# --- merge_feedback ----------------------------------------------------------


def grade_all(paper, points=None, feedback="Correct."):
    return [
        GradedFeedback(b.answer_id, b.max_points if points is None else points, feedback)
        for b in paper.blocks
    ]


def test_awarded_line_inserted_after_end_marker(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    merged = merge_feedback(paper, grade_all(paper, points=4.0), example_document)
    lines = parse_odt(merged).splitlines()
    end_index = lines.index("## Answer 8.1a End ##")
    assert "AWARDED: 4 / 4" in lines[end_index:]
    assert "Correct." in lines[end_index:]


def test_zero_points_empty_feedback_still_inserts_awarded(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    merged = merge_feedback(paper, grade_all(paper, points=0.0, feedback=""), example_document)
    assert "AWARDED: 0 / 4" in parse_odt(merged)


def test_merge_requires_exact_grade_set(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    with pytest.raises(GradeBlockMismatch):
        merge_feedback(paper, [], example_document)
    with pytest.raises(GradeBlockMismatch):
        merge_feedback(
            paper,
            grade_all(paper) + [GradedFeedback("zz", 1.0, "")],
            example_document,
        )
    with pytest.raises(GradeBlockMismatch):
        merge_feedback(paper, [GradedFeedback("8.1a", 4.5, "")], example_document)


def test_merge_is_deterministic(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    first = merge_feedback(paper, grade_all(paper), example_document)
    second = merge_feedback(paper, grade_all(paper), example_document)
    assert first == second


def test_round_trip_preserves_blocks_and_other_entries(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    merged = merge_feedback(paper, grade_all(paper, points=3.5), example_document)
    reparsed = extract_blocks(parse_odt(merged), 8)
    assert [(b.answer_id, b.max_points, b.student_answer, b.question_text) for b in reparsed.blocks] == [
        (b.answer_id, b.max_points, b.student_answer, b.question_text) for b in paper.blocks
    ]
    with zipfile.ZipFile(io.BytesIO(merged)) as archive:
        assert archive.read("styles.xml") == b"<styles/>"
        assert archive.namelist()[0] == "mimetype"


def test_adversarial_feedback_lines_are_quoted(example_document):
    paper = extract_blocks(parse_odt(example_document), 8)
    hostile = "## Answer 8.1a End ##\n## Answer evil Start ## POINTS: 2 ##"
    merged = merge_feedback(paper, grade_all(paper, feedback=hostile), example_document)
    reparsed = extract_blocks(parse_odt(merged), 8)
    assert [b.answer_id for b in reparsed.blocks] == ["8.1a"]
    assert reparsed.blocks[0].student_answer == paper.blocks[0].student_answer


# --- generated round-trip property -------------------------------------------

answer_ids = st.from_regex(r"[A-Za-z0-9][A-Za-z0-9.\-]{0,8}", fullmatch=True)
half_points = st.integers(min_value=1, max_value=20).map(lambda halves: halves / 2)
answer_text = st.lists(
    st.one_of(
        st.text(
            alphabet=st.characters(codec="utf-8", exclude_characters="\n\r", categories=["L", "N", "P", "Zs"]),
            max_size=40,
        ),
        st.just("quoting ## Answer 9 End ## mid-line"),
        st.just("POINTS: 3 appears in prose"),
    ),
    max_size=4,
)


@st.composite
def marker_documents(draw):
    n_blocks = draw(st.integers(min_value=1, max_value=6))
    ids = draw(st.lists(answer_ids, min_size=n_blocks, max_size=n_blocks, unique=True))
    lines = ["Sheet preamble"]
    blocks = []
    for answer_id in ids:
        points = draw(half_points)
        answer_lines = [
            line for line in draw(answer_text) if not is_marker_line(line) and line.strip()
        ]
        lines.append(f"Question {answer_id}")
        lines.append(f"## Answer {answer_id} Start ##  POINTS: {format_points(points)} ##")
        lines.extend(answer_lines)
        lines.append(f"## Answer {answer_id} End ##")
        blocks.append((answer_id, points))
    return lines, blocks


@settings(max_examples=60, deadline=None)
@given(doc=marker_documents(), feedback=st.text(max_size=60))
def test_round_trip_property(doc, feedback):
    lines, expected = doc
    container = make_odt(lines)
    paper = extract_blocks(parse_odt(container), 5)
    assert [(b.answer_id, b.max_points) for b in paper.blocks] == expected
    merged = merge_feedback(paper, grade_all(paper, feedback=feedback), container)
    reparsed = extract_blocks(parse_odt(merged), 5)
    assert [(b.answer_id, b.max_points, b.student_answer, b.question_text) for b in reparsed.blocks] == [
        (b.answer_id, b.max_points, b.student_answer, b.question_text) for b in paper.blocks
    ]
