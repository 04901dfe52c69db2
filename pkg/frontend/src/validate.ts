/**
 * Minimal JSON-Schema (draft-07 subset) validator covering exactly the
 * constructs the service's published schemas use: type (plus type arrays),
 * object properties/required/additionalProperties, array items with
 * minItems/maxItems, enum, oneOf, numeric minimum, and $ref into
 * "#/definitions". Payloads are checked verbatim; a violation produces a
 * path-qualified error instead of a silent coercion.
 */

export interface Schema {
  type?: string | string[];
  properties?: Record<string, Schema>;
  required?: string[];
  additionalProperties?: boolean | Schema;
  items?: Schema;
  minItems?: number;
  maxItems?: number;
  enum?: unknown[];
  oneOf?: Schema[];
  minimum?: number;
  definitions?: Record<string, Schema>;
  $ref?: string;
}

function typeOf(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "array";
  if (typeof value === "number") return Number.isInteger(value) ? "integer" : "number";
  return typeof value;
}

function typeMatches(actual: string, expected: string): boolean {
  return expected === actual || (expected === "number" && actual === "integer");
}

function resolveRef(ref: string, root: Schema): Schema {
  if (!ref.startsWith("#/definitions/")) {
    throw new Error(`unsupported $ref: ${ref}`);
  }
  const name = ref.slice("#/definitions/".length);
  const target = root.definitions?.[name];
  if (!target) throw new Error(`unresolved $ref: ${ref}`);
  return target;
}

export function validationErrors(
  value: unknown,
  schema: Schema,
  root?: Schema,
  path = "$",
): string[] {
  const rootSchema = root ?? schema;
  if (schema.$ref) {
    return validationErrors(value, resolveRef(schema.$ref, rootSchema), rootSchema, path);
  }
  const errors: string[] = [];
  const actual = typeOf(value);

  if (schema.oneOf) {
    const failures: string[][] = [];
    for (const candidate of schema.oneOf) {
      const sub = validationErrors(value, candidate, rootSchema, path);
      if (sub.length === 0) return [];
      failures.push(sub);
    }
    return [`${path}: no oneOf branch matched (${failures.map((f) => f[0]).join(" | ")})`];
  }

  if (schema.type !== undefined) {
    const expected = Array.isArray(schema.type) ? schema.type : [schema.type];
    if (!expected.some((t) => typeMatches(actual, t))) {
      return [`${path}: expected ${expected.join("|")}, got ${actual}`];
    }
  }

  if (schema.enum !== undefined && !schema.enum.some((v) => v === value)) {
    errors.push(`${path}: ${JSON.stringify(value)} not in enum`);
  }

  if (schema.minimum !== undefined && typeof value === "number" && value < schema.minimum) {
    errors.push(`${path}: ${value} below minimum ${schema.minimum}`);
  }

  if (actual === "array" && Array.isArray(value)) {
    if (schema.minItems !== undefined && value.length < schema.minItems) {
      errors.push(`${path}: fewer than ${schema.minItems} items`);
    }
    if (schema.maxItems !== undefined && value.length > schema.maxItems) {
      errors.push(`${path}: more than ${schema.maxItems} items`);
    }
    if (schema.items) {
      value.forEach((item, i) => {
        errors.push(...validationErrors(item, schema.items as Schema, rootSchema, `${path}[${i}]`));
      });
    }
  }

  if (actual === "object" && value !== null && typeof value === "object") {
    const obj = value as Record<string, unknown>;
    for (const key of schema.required ?? []) {
      if (!(key in obj)) errors.push(`${path}: missing required property "${key}"`);
    }
    for (const [key, sub] of Object.entries(schema.properties ?? {})) {
      if (key in obj) {
        errors.push(...validationErrors(obj[key], sub, rootSchema, `${path}.${key}`));
      }
    }
    if (schema.additionalProperties === false) {
      const known = new Set(Object.keys(schema.properties ?? {}));
      for (const key of Object.keys(obj)) {
        if (!known.has(key)) errors.push(`${path}: unexpected property "${key}"`);
      }
    }
  }

  return errors;
}

export function assertValid<T>(value: unknown, schema: Schema, label: string): T {
  const errors = validationErrors(value, schema);
  if (errors.length > 0) {
    throw new Error(`${label} violates schema: ${errors.slice(0, 3).join("; ")}`);
  }
  return value as T;
}
