#ifndef SOCBENCH_PROMPT_TEXT_HPP
#define SOCBENCH_PROMPT_TEXT_HPP

#include <string>
#include <string_view>

// Fixed prompt wording for both tasks. Grid-size dependent pieces are filled
// in by the serializers in ir_task.hpp / iip_task.hpp.
namespace socbench::prompt_text {

inline std::string corner_sentence_ir(int width, int height) {
    auto pt = [](int c, int r) { return "(" + std::to_string(c) + "," + std::to_string(r) + ")"; };
    return "We're assuming the top left corner is " + pt(0, 0) + ", top right is " + pt(width - 1, 0) +
           ", bottom left is " + pt(0, height - 1) + ", and bottom right is " + pt(width - 1, height - 1) +
           ". Here is student A's trajectory. The coordinates reflect the position of the A. Each time student A "
           "can move one step.";
}

inline constexpr std::string_view kIrQuestion =
    "Question:\n"
    "Please follow the instructions to answer the question. Below is one possible layout of the food truck area. "
    "The letter 'A' stands for Student A, '*' stands for empty areas, and 'W' stands for obstructed walls that "
    "block the student. Other letters represent different kinds of food.";

inline constexpr std::string_view kIrTrajectoryIntro =
    "Here is the student A's trajectory. The coordinates reflect the position of the A. Each time agent can move "
    "one step.";

inline constexpr std::string_view kIrClosing =
    "Please determine the preference among all the five foods foods and provide your answer following the format.";

inline std::string ir_examples_intro(int count, int width, int height) {
    std::string n = count == 1 ? "one example which shares" : count == 2 ? "two examples which share"
                                                                         : "three examples which share";
    return "You will be presented with " + n +
           " the same layout to solve the problem. Please go through the example carefully to understand the "
           "solution. Here is a layout and the trajectory of student A. " +
           corner_sentence_ir(width, height);
}

// Canonical IR examples, in insertion order Previsited, Intermediate, Last.
inline constexpr std::string_view kIrExampleLayout =
    "***Y*\n"
    "*****\n"
    "**X**\n"
    "M*WW*\n"
    "*ZWWA";

inline constexpr std::string_view kIrExampleExplanation[3] = {
    "When Student A explores all the food options and then goes back to choose Y, it implies that Y is his second "
    "favorite food. This suggests that Student A's favorite food is not available today, as he would not have "
    "returned to pick up his second favorite otherwise.",
    "Student A picks up X without fully exploring other options, suggesting that X is his favorite food, while his "
    "preferences for other options remain unknown.",
    "Student A thoroughly examines all the available options and ultimately selects option Z. This suggests that he "
    "prefers Z over the other alternatives\u2014X, Y, and M. However, his preference for option N remains unclear. "
    "It is possible that Z is his favorite food, or alternatively, N could be his favorite food. In the latter case, "
    "due to N's unavailability, he might have opted for his second favorite choice, Y.",
};

inline std::string iip_setting(int width, int height) {
    return "Setting:\n"
           "A campus area is represented by a " +
           std::to_string(width) + "*" + std::to_string(height) +
           " grid. There are only two restaurants, X and Y on the campus. Student A attends school daily and is fully "
           "aware of the locations of each restaurant. He has a clear pre-established preference between X and Y, "
           "that is, he decides to eat at restaurant X. Observer B is an observer who monitors A's actions and is "
           "smart enough to infer A's preference once it has been signaled.";
}

inline constexpr std::string_view kIipAction =
    "Action:\n"
    "Student A can only take one step each time in four directions: up, down, left, and right. He wants to "
    "carefully plan his actions to achieve two goals.\n"
    "Primary goal: He wants to signal his preference (Restaurant X) to B as early as possible with the least "
    "ambiguity.\n"
    "Secondary goal: Once he thinks that the preference has been signaled, he will move to Restaurant X as soon as "
    "possible because he is hungry.";

inline std::string iip_layout_intro(int width, int height) {
    auto pt = [](int c, int r) { return "(" + std::to_string(c) + "," + std::to_string(r) + ")"; };
    return "Layout:\n"
           "Below is one possible layout of the campus area. The letter 'A' stands for Student A, '*' stands for "
           "empty areas, and 'W' stands for obstructed walls that block the student. The top-left grid cell is "
           "designated as " +
           pt(0, 0) + ", the top-right as " + pt(width - 1, 0) + ", the bottom-left as " + pt(0, height - 1) +
           ", and the bottom-right as " + pt(width - 1, height - 1) +
           ". The letters 'X' and 'Y' stand for two restaurants.";
}

inline constexpr std::string_view kIipTask =
    "Task:\n"
    "Your task is to help A to choose the optimal action trajectory to achieve the above goals. Also, calculate the "
    "number of steps required to achieve the primary goal.";

inline constexpr std::string_view kIipQuestion = "Question: Most Proper Route";

inline constexpr std::string_view kIipExample =
    "Example: \n"
    "Below is one possible setting of the campus area. Student A is at (1,4) and Restaurant X is at (3,0)\n"
    "Route A:\n"
    "Start at (1,4), go up to (1,3), then right to (2,3). Continue up to (2,0) and finally right to X (3,0). This "
    "route indicates a preference for X (3,0) by initially moving upwards. This avoids any suggestion of heading "
    "towards Y (4,0) that could be inferred from a rightward movement. Once the preference is signaled, the route "
    "then opts for the shortest route.\n"
    "Route B:\n"
    "Begin at (1,4), move left to (0,4), and go up to (0,0). Then move right to X (3,0). This route moves left first "
    "and continues to bypass the wall from the left to avoid the misinterpretation of intention during the whole "
    "movement. \n"
    "Route C:\n"
    "Start at (1,4), go right to (4,4), then up to Y (4,0) and left to X (3,0). This route only indicates that the "
    "target is X (3,0) not Y (4,0) when moving away from Y after it reaches Y.\n"
    "Route D:\n"
    "From (1,4), move right to (3,4), then up to X (3,0). This is a simple, direct route to X (3,0). \n"
    "\n"
    "As you may have realized, our routes in each problem are of the above 4 styles but occur in each problem in "
    "randomly shuffled orders.";

} // namespace socbench::prompt_text

#endif
