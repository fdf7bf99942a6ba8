#pragma once

#include <string_view>

/// Prompt templates. `{name}` placeholders are filled by text::render.
namespace plurihop::prompts {

namespace role {
inline constexpr std::string_view kDecompose = "decompose";
inline constexpr std::string_view kExtractMetadata = "extract_metadata";
inline constexpr std::string_view kAnswerDocument = "answer_document";
inline constexpr std::string_view kMergePageGroups = "merge_page_groups";
inline constexpr std::string_view kAggregate = "aggregate";
inline constexpr std::string_view kNaiveAnswer = "naive_answer";
inline constexpr std::string_view kSummarize = "summarize";
inline constexpr std::string_view kSplitStatements = "split_statements";
inline constexpr std::string_view kJudgeStatements = "judge_statements";
inline constexpr std::string_view kFileReferences = "file_references";
inline constexpr std::string_view kTrainingExample = "training_example";
}  // namespace role

inline constexpr std::string_view kMetadataExtractor = R"(Determine if question is about specific turbine id(s), specific windpark(s), or neither.
Return the turbine id(s) and/or windpark name(s) in JSON format (schema in examples).
The windpark name is one or several words, while turbine IDs are alphanumeric.

Examples:

Question: "What is the maintenance schedule for wind turbine ABC123?"
Response: {"plant_id": ["ABC123"]}

Question: "What is the maintenance schedule for ABC123 and CDE567 in Windpark Blombheim?"
Response: {"plant_id": ["ABC123", "CDE567"], "windpark": ["Blombheim"]}

Question: "What is the maintenance schedule for wind turbines in Blombheim and Waldstein?"
Response: {"windpark": ["Blombheim", "Waldstein"]}

Question: "What is the maintenance schedule for all wind turbines?"
Response: {}

Your Task: {prompt})";

inline constexpr std::string_view kQuestionDecomposer = R"(I have a RAG application.
Given a question about one or multiple documents, determine:

1. A hypothetical summary of the document (or one of the documents) that would be relevant to answer the question (max 100 tokens).
2. A set of questions to ask to the document(s) to retrieve all information needed to answer the question.

Rules:
- Sometimes multiple documents are needed to answer the question. So a question about a trend could be answered either with a document describing this trend (if such a document exists, usually it doesn't), or with multiple documents describing the current situation and the trend could be inferred. Therefore, the questions should take both possibilities into account.
- Try to get all needed information with as few questions as possible, minimizing overlap.

Return in JSON format, without markdown code block formatting, as follows:
{'hypothetical_summary': str, 'questions': list[str]})";

/// Appended to the decomposer system prompt in few-shot mode; {examples} is
/// a list of Question/Response pairs.
inline constexpr std::string_view kFewShotSuffix = R"(

Examples:

{examples})";

inline constexpr std::string_view kDocumentAnswerGenerator = R"(You are a wind energy expert.
Given one or multiple questions, answer all of them using the provided context.
All the context comes from one document.

Return in JSON format, without markdown code block formatting,
with key 'answers' and value list of strings.

Questions: {questions}
Context: {context})";

inline constexpr std::string_view kPageGroupAggregator = R"(I tried to answer multiple questions using individual pages or groups of pages from a document.
Given the answers based on each page, construct the correct answers based on the whole document.

Return in JSON format, without markdown code block formatting,
with key 'answers' and value a list of strings.

Do not omit any relevant details.

Questions: {questions}
Answers: {answers})";

inline constexpr std::string_view kAnswerAggregator = R"(A question was asked about some document(s).
This question was split into intermediate questions, and these intermediate questions were answered with one or multiple documents as context.

Given the original question, the intermediate questions, and each document's answer to the intermediate questions, construct the final answer to the original question (in the language of the original question).

Only include information that directly answers the original question.
If that means omitting some information from the intermediate answers, that's fine.
Don't explain how you arrived at the answer.

After each fact, put a reference to the document with [Document <document_index>].
If a fact comes from multiple documents, reference them like [Document <1>], [Document <2>], etc., instead of [Document 1, 2].

After you construct the final answer, also return a list of documents which were relevant to answer the question
(i.e. all documents you referenced, in ascending order of index).

The output should be in JSON format.

Example Output:
{'answer': 'example answer', 'relevant_documents': [3, 5, 6]}

Your Task:

Original Question: {original_question}
Intermediate Questions: {intermediate_questions}
Document Answers: {document_answers}

Final Answer (RETURN IN JSON, without markdown code block formatting):)";

inline constexpr std::string_view kStatementSplitter = R"(Below is a question and answer. I want to split the answer into statements in such a way, that I can recreate the answer (or a paraphrased version) by using the question and the statements, while keeping the statements as few and as short & simple as possible. If it makes sense, the statements should be key-value pairs (with keys and values as strings), otherwise they should be strings. The whole answer should be in json format, in the following format:
{
    "1": <statement_1>,
    "2": <statement_2>,
    ...
}

Below are some rules to follow:
1. There should be as few statements as possible, and they should be as simple as possible, to still recreate the answer (or a paraphrased version of the answer) using BOTH the question and statements.
Example:
Question:
Are there any anomalies in the oil report for wind turbine 123?
Answer:
Yes there are 2 anomalies in the oil report for wind turbine 123: the chrome level is too high and the magnesium level too high.
Bad outcome:
{
    "1": {"turbine": "123"} # this statement isn't necessary to recreate the answer because the turbine id can be found in the question
    "2": {"number of anomalies in oil report": "2"} # it's unnecessary to write "oil report" because the document type can be found in the question
    "3": {"anomaly": "chrome level too high"}
    "4": {"anomaly": "magnesium level too high"}
}
Desired outcome:
{
    "1": {"number of anomalies": "2"},
    "2": {"anomaly": "chrome level too high"},
    "3": {"anomaly": "magnesium level too high"}
}

2. If the statement is a string, it should be max 1 short sentence. If it is a key-value pair, the value must be max 1 short sentence.
Example:
"Conclusion: Chromium levels high. Continue monitoring to observe further trends"
Desired behaviour:
{
    "1": {"Conclusion": "Chromium levels high"},
    "2": {"Conclusion": "Continue monitoring to observe further trends"}
}

3. If an answer is refused because relevant context couldn't be found, and alternative questions are suggested to avoid this, this should be interpreted as zero statements. If the answer is that relevant context couldn't be found, but the irrelevant context is talked about anyway, the answer should be treated like any other.

4. If the answer contains references to documents via their filenames, this should be ignored and not included in the inferred statements.

Question:
{question}

Answer:
{answer})";

inline constexpr std::string_view kStatementComparator = R"(An answer to a question was split into statements. You need to compare this answer to another, reference, answer. For each statement, determine SEPARATELY if the *exact* statement can be directly implied from the reference answer (not the original answer)?. Respond in json format, where for each statement the key is the statement index and the value is a bool that is true if you can infer the statement from the text, false otherwise. Also have a key-value pair where the key is "inferred_statements" and the value is the number of keys in the dictionary with value true.

EXAMPLE:
Answer: In the past 5 years, the repairs on wind turbine 123 have occured 4 times: on 2020.05.01, 2021.05.02, 2022.05.04, and 2023.05.04.
Statements: ['{number of repairs': '4'}', '{repair date': '2020.05.01'}', '{repair date': '2021.05.02}', '{repair date': '2022.05.04}', '{repair date': '2023.05.04}']
Reference text: There were 5 repairs conducted in the past 5 years: on 2020.05.01, 2021.05.02, 2022.05.03, 2023.05.04, and 2024.05.05.
EXAMPLE OUTPUT: {'1': false, '2': true, '3': true, '4': false, '5': true, 'inferred_statements': 3}

YOUR TASK:
Answer: {text}
Statements: {statements}
Reference text: {reference_text})";

inline constexpr std::string_view kFileReferenceFinder = R"(Find references to pdf files in an answer. They will look like [filename.pdf]. Return a list (without repetitions) of filenames in JSON format, like so:
{'filenames': ['filename1.pdf', 'filename2.pdf']}

Text: {text}
Answer:)";

// -- Prompts below have no published wording. --------------------------------

inline constexpr std::string_view kDocumentSummarizer = R"(Summarize the following document in at most 150 words.
Name the document type, the entities it concerns (for example turbine IDs, windparks, people, organisations), the dates it covers, and the kinds of information it contains.
Return only the summary text.

Document ({filename}):
{context})";

inline constexpr std::string_view kNaiveAnswer = R"(Answer the question using only the provided context passages.
Each passage is labelled with the index of the document it comes from.
After each fact, put a reference to the document with [Document <document_index>].
If the context does not contain the answer, say so.

Return in JSON format, without markdown code block formatting:
{'answer': str, 'relevant_documents': list[int]}

Question: {question}
Context:
{context})";

inline constexpr std::string_view kTrainingExampleGenerator = R"(You are preparing training data for a model that decomposes questions about a document corpus into questions asked to individual documents.

You are given a question that requires information from many documents, and one document that is relevant to answering it.

1. First, reason about what information within this document is relevant to answering the question.
2. After the reasoning, write a short hypothetical summary (max 100 tokens) of a document that would be relevant to the question.
3. Then generate a list of questions to ask to an equivalent document that would be sufficient to extract all the relevant information.

Return in JSON format, without markdown code block formatting:
{'reasoning': str, 'hypothetical_summary': str, 'questions': list[str]}

Question: {question}
Document ({filename}{truncation_note}):
{context})";

}  // namespace plurihop::prompts
