import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventqa.question import (
    EventPattern,
    EventRef,
    ObjectFilter,
    Presence,
    QuestionAST,
    QuestionParseError,
    Temporal,
    parse_question,
    random_question,
    read_questions,
    render_question,
    write_questions,
)


def test_count_moving_at_end():
    ast = parse_question("How many objects are moving when the video ends?")
    assert ast == QuestionAST("count", subject=ObjectFilter(), state="moving", temporal=Temporal("end"))


def test_query_collision_partner():
    ast = parse_question("What is the color of the cube that collides with the sphere?")
    assert ast.qtype == "query_attribute"
    assert ast.target_attribute == "color"
    assert ast.subject == ObjectFilter(shape="cube")
    assert ast.event == EventPattern("collision", ObjectFilter(shape="sphere"))


def test_exist_with_temporal_event():
    ast = parse_question("Are there any red metal spheres that enter the scene after the exit of the cube?")
    assert ast.qtype == "exist"
    assert ast.subject == ObjectFilter("red", "metal", "sphere")
    assert ast.temporal == Temporal("after", EventRef("exit", (ObjectFilter(shape="cube"),)))


def test_multiple_choice_forms():
    ast = parse_question(
        "Which of the following is responsible for the collision between the cube and the sphere?"
        " | the presence of the red object | the entrance of the cylinder"
    )
    assert ast.options == (Presence(ObjectFilter("red")), EventRef("entry", (ObjectFilter(shape="cylinder"),)))
    cf = parse_question("Without the blue cube, which of the following will happen? | the exit of the sphere | the exit of the cube")
    assert cf.removed == ObjectFilter("blue", shape="cube")
    assert parse_question("Which of the following will happen next? | the exit of the sphere | the exit of the cube").qtype == "predictive"


def test_case_insensitive():
    assert parse_question("HOW MANY CUBES ARE PRESENT WHEN THE VIDEO BEGINS?").state == "present"


def test_unknown_attribute_token():
    with pytest.raises(QuestionParseError, match="unknown attribute token 'pink'"):
        parse_question("How many pink cubes are moving when the video ends?")


def test_divergence_position():
    with pytest.raises(QuestionParseError) as err:
        parse_question("How many objects are flying when the video ends?")
    assert err.value.position == len("How many objects are ")


def test_needs_two_options():
    with pytest.raises(QuestionParseError):
        parse_question("Which of the following will happen next? | the exit of the sphere")
    with pytest.raises(ValueError):
        QuestionAST("predictive", options=(EventRef("exit", (ObjectFilter(),)),))


def test_round_trip_sample():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ast = random_question(rng)
        assert parse_question(render_question(ast)) == ast


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_round_trip_property(seed):
    ast = random_question(np.random.default_rng(seed))
    text = render_question(ast)
    assert parse_question(text) == ast
    assert render_question(parse_question(text)) == text


def test_question_file_round_trip():
    items = [("a1", "How many cubes are present when the video begins?"), ("b", "How many objects enter the scene?")]
    assert read_questions(write_questions(items)) == items
    assert read_questions("\nHow many cubes exit the scene?\n") == [("q2", "How many cubes exit the scene?")]
